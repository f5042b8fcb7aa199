"""Command-line surface: generate, train, sweep, report, export-figures.

Exit codes: 0 success, 1 user error (bad config/paths), 2 trial failure
(divergence or a sweep with no usable trials).  Failures also emit a single
machine-readable JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .reporting import export_figures, render_table, table_overall, table_per_factor, table_per_group, write_csv
from .store import TrialStore
from .sweep import SelectionPolicy, SweepError, run_sweep, select_model
from .training import DEFAULT_ALPHA_GRID

STORE_ENV = "BIASBENCH_STORE"


class CliError(Exception):
    def __init__(self, message, code=1):
        super().__init__(message)
        self.code = code


def _store_root(args) -> Path:
    root = args.store or os.environ.get(STORE_ENV)
    if not root:
        raise CliError(f"no store given: pass --store or set {STORE_ENV}")
    return Path(root)


def _load(args) -> dict:
    try:
        return cfgmod.load_config(args.config)
    except cfgmod.ConfigError as e:
        raise CliError(str(e))


def cmd_generate(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    try:
        _, dataset = cfgmod.materialize_dataset(cfg["dataset"], out.parent, fmt=args.format, out_dir=out)
    except Exception as e:
        raise CliError(f"generation failed: {e}")
    counts = {s: len(v) for s, v in dataset.splits.items()}
    print(json.dumps({"dataset_dir": str(out), "splits": counts}))
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    store = TrialStore(_store_root(args))
    ds_dir, dataset = cfgmod.materialize_dataset(cfg["dataset"], store.root)
    train_cfg = cfgmod.build_train_config(cfg, dataset)
    record = store.get_or_run(dataset, train_cfg, dataset_ref=ds_dir.name)
    summary = {
        "trial_id": record.trial_id,
        "status": record.status,
        "best_epoch": record.best_epoch,
    }
    if "best_test" in record.reports:
        summary["test_unbiased"] = record.reports["best_test"].acc_by_alpha.get(0.0)
    print(json.dumps(summary))
    return 0 if record.status == "ok" else 2


def cmd_sweep(args) -> int:
    cfg = _load(args)
    store = TrialStore(_store_root(args))
    ds_dir, dataset = cfgmod.materialize_dataset(cfg["dataset"], store.root)
    plan = cfgmod.build_sweep_plan(cfg, dataset)
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    try:
        records = run_sweep(plan, dataset, store, dataset_ref=ds_dir.name, log=log)
        winner = select_model(records, plan.policy)
    except SweepError as e:
        raise CliError(str(e), code=2)
    store.rebuild_index()
    print(
        json.dumps(
            {
                "trials": len(records),
                "ok": sum(r.status == "ok" for r in records),
                "winner": winner.trial_id,
                "winner_test_unbiased": winner.reports["best_test"].acc_by_alpha.get(0.0),
            }
        )
    )
    return 0


def _filtered_records(store, args):
    records = store.load_all()
    if args.dataset:
        records = [r for r in records if args.dataset in (r.dataset_ref, r.dataset_fp)]
    if args.method:
        records = [r for r in records if r.config["method"]["tag"] == args.method]
    return records


def cmd_report(args) -> int:
    store = TrialStore(_store_root(args))
    records = _filtered_records(store, args)
    if not records:
        raise CliError("no trials match the given selectors")
    policy = SelectionPolicy(alpha_select=args.alpha_select)
    if args.like == "overall":
        headers, rows, raw = table_overall(records, policy)
    elif args.like in ("per-group", "per-factor"):
        try:
            winner = select_model(records, policy)
        except SweepError as e:
            raise CliError(str(e), code=2)
        fn = table_per_group if args.like == "per-group" else table_per_factor
        headers, rows, raw = fn(winner)
        print(f"# trial {winner.trial_id}", file=sys.stderr)
    else:
        raise CliError(f"unknown report kind {args.like!r}")
    print(render_table(headers, rows), end="")
    if args.out:
        write_csv(args.out, headers, raw)
    return 0


def cmd_export_figures(args) -> int:
    store = TrialStore(_store_root(args))
    records = _filtered_records(store, args)
    if not records:
        print(json.dumps({"written": []}))
        return 0
    written = export_figures(
        records, args.out,
        alpha_grid=args.alpha_grid or list(DEFAULT_ALPHA_GRID),
        baseline_tag=args.baseline,
    )
    print(json.dumps({"written": [str(p) for p in written]}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="biasbench",
        description="Multi-bias benchmark: dataset synthesis, debiasing objectives, group metrics.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a dataset from a spec/config file")
    g.add_argument("--spec", "--config", dest="config", required=True, help="dataset spec or experiment config (YAML)")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--format", choices=["png", "packed"], default=None, help="image storage format")
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="run (or fetch) one trial")
    t.add_argument("--config", required=True)
    t.add_argument("--store", default=None, help=f"trial store root (or ${STORE_ENV})")
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sweep", help="two-stage hyperparameter search")
    s.add_argument("--config", required=True)
    s.add_argument("--store", default=None)
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(fn=cmd_sweep)

    r = sub.add_parser("report", help="render tables from the trial store")
    r.add_argument("--store", default=None)
    r.add_argument("--like", choices=["overall", "per-group", "per-factor"], default="overall")
    r.add_argument("--dataset", default=None, help="filter by dataset ref")
    r.add_argument("--method", default=None, help="filter by method tag")
    r.add_argument("--alpha-select", type=float, default=0.0)
    r.add_argument("--out", default=None, help="also write full-precision CSV here")
    r.set_defaults(fn=cmd_report)

    e = sub.add_parser("export-figures", help="emit figure data series and renders")
    e.add_argument("--store", default=None)
    e.add_argument("--out", required=True)
    e.add_argument("--dataset", default=None)
    e.add_argument("--method", default=None)
    e.add_argument("--baseline", default="StdM")
    e.add_argument("--alpha-grid", type=float, nargs="*", default=None)
    e.set_defaults(fn=cmd_export_figures)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as e:
        print(json.dumps({"error": str(e), "code": e.code}), file=sys.stderr)
        return e.code
    except Exception as e:  # unexpected: still machine-readable
        print(json.dumps({"error": f"{type(e).__name__}: {e}", "code": 1}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
