"""Report tables and figure exports assembled from the trial store.

Rendered tables round to one decimal (in percent); the CSV exports keep full
precision.  Reports are pure functions of the store contents.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path

import numpy as np

from .metrics import iosm
from .sweep import SelectionPolicy, SweepError, group_key_str, select_model, selection_sensitivity


class ReportError(Exception):
    pass


def _fmt(x) -> str:
    return "-" if x is None else f"{100.0 * x:.1f}"


def render_table(headers, rows) -> str:
    cells = [list(map(str, headers))] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_csv(path, headers, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        writer.writerows(rows)


def csv_text(headers, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(headers)
    writer.writerows(rows)
    return buf.getvalue()


def _by_method_dataset(records):
    grouped = defaultdict(list)
    for rec in records:
        grouped[(rec.config["method"]["tag"], rec.dataset_ref or rec.dataset_fp)].append(rec)
    return grouped


def table_overall(records, policy: SelectionPolicy | None = None):
    """One row per method, one column per dataset, cell = test Acc(0) of the
    selected model."""
    policy = policy or SelectionPolicy()
    grouped = _by_method_dataset(records)
    methods = sorted({m for m, _ in grouped})
    datasets = sorted({d for _, d in grouped})
    rows, raw = [], []
    for m in methods:
        row, raw_row = [m], [m]
        for d in datasets:
            recs = grouped.get((m, d), [])
            try:
                winner = select_model(recs, policy)
                acc = winner.reports["best_test"].acc_by_alpha.get(0.0)
            except SweepError:
                acc = None
            row.append(_fmt(acc))
            raw_row.append(acc)
        rows.append(row)
        raw.append(raw_row)
    headers = ["method"] + datasets
    return headers, rows, raw


def table_per_group(record):
    """Group accuracy columns plus the unbiased accuracy, for one trial."""
    report = record.reports["best_test"]
    table = report.group_table
    headers = [f"group({group_key_str(k)})" for k in table.keys] + ["unbiased"]
    accs = list(table.accuracies()) + [report.acc_by_alpha.get(0.0)]
    return headers, [[_fmt(a) for a in accs]], [accs]


def table_per_factor(record):
    """Majority/minority accuracy per factor, for one trial."""
    report = record.reports["best_test"]
    headers = ["factor", "majority", "minority", "gap"]
    rows, raw = [], []
    for factor, (maj, mn) in sorted(report.majmin_by_factor.items()):
        rows.append([factor, _fmt(maj), _fmt(mn), _fmt(maj - mn)])
        raw.append([factor, maj, mn, maj - mn])
    return headers, rows, raw


def export_figures(records, out_dir, alpha_grid=None, baseline_tag: str = "StdM"):
    """Emit the numeric series behind the standard figures, plus renders.

    Writes (when the matching trials exist): per-method-per-factor gap data
    with a boxplot, unbiased accuracy versus number of explicit factors,
    per-alpha winner group accuracies, and per-group improvement over the
    baseline method.  Returns the list of written paths.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    ok = [r for r in records if r.status == "ok" and "best_test" in r.reports]
    if not ok:
        return written

    # Majority/minority gaps per factor per method.
    rows = []
    for rec in ok:
        tag = rec.config["method"]["tag"]
        for factor, (maj, mn) in sorted(rec.reports["best_test"].majmin_by_factor.items()):
            rows.append([tag, rec.trial_id, factor, maj, mn, maj - mn])
    if rows:
        path = out_dir / "mmd_per_factor.csv"
        write_csv(path, ["method", "trial_id", "factor", "majority", "minority", "mmd"], rows)
        written.append(path)
        by_method = defaultdict(list)
        for tag, _, _, _, _, gap in rows:
            by_method[tag].append(gap)
        fig, ax = plt.subplots(figsize=(6, 3.2))
        tags = sorted(by_method)
        ax.boxplot([by_method[t] for t in tags], tick_labels=tags)
        ax.set_ylabel("majority - minority accuracy")
        ax.axhline(0.0, color="gray", lw=0.5)
        fig.tight_layout()
        fig.savefig(out_dir / "mmd_boxplot.png", dpi=120)
        plt.close(fig)
        written.append(out_dir / "mmd_boxplot.png")

    # Unbiased accuracy as a function of the number of explicit factors.
    series = defaultdict(dict)
    implicit_acc = {}
    for rec in ok:
        tag = rec.config["method"]["tag"]
        n_expl = len(rec.config["explicit_factors"])
        acc = rec.reports["best_test"].acc_by_alpha.get(0.0)
        from .methods import MethodConfig as _MC

        if _MC(tag).explicit:
            series[tag].setdefault(n_expl, []).append(acc)
        else:
            implicit_acc.setdefault(tag, []).append(acc)
    if series or implicit_acc:
        counts = sorted({n for s in series.values() for n in s}) or [1]
        rows = []
        for tag, s in sorted(series.items()):
            for n_expl in sorted(s):
                rows.append([tag, n_expl, float(np.mean(s[n_expl]))])
        for tag, accs in sorted(implicit_acc.items()):
            for n_expl in counts:  # invariant to the selection; repeated flat
                rows.append([tag, n_expl, float(np.mean(accs))])
        path = out_dir / "acc_vs_num_explicit.csv"
        write_csv(path, ["method", "num_explicit_factors", "test_unbiased"], rows)
        written.append(path)
        fig, ax = plt.subplots(figsize=(5, 3.2))
        by_tag = defaultdict(list)
        for tag, n_expl, acc in rows:
            by_tag[tag].append((n_expl, acc))
        for tag, pts in sorted(by_tag.items()):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=tag)
        ax.set_xlabel("explicit factors")
        ax.set_ylabel("unbiased accuracy")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(out_dir / "acc_vs_num_explicit.png", dpi=120)
        plt.close(fig)
        written.append(out_dir / "acc_vs_num_explicit.png")

    # Per-alpha winners (tuning-distribution sensitivity).
    if alpha_grid:
        by_method = defaultdict(list)
        for rec in ok:
            by_method[rec.config["method"]["tag"]].append(rec)
        rows = []
        for tag, recs in sorted(by_method.items()):
            try:
                sens = selection_sensitivity(recs, alpha_grid)
            except SweepError:
                continue
            for w in sens["winners"]:
                for key, acc in sorted(w["test_acc_by_group"].items()):
                    rows.append([tag, w["alpha"], w["trial_id"], key, acc])
        if rows:
            path = out_dir / "alpha_sensitivity.csv"
            write_csv(path, ["method", "alpha", "trial_id", "group", "test_accuracy"], rows)
            written.append(path)

    # Per-group improvement over the baseline method.
    baselines = [r for r in ok if r.config["method"]["tag"] == baseline_tag]
    if baselines:
        base_by_ds = {}
        for rec in baselines:
            base_by_ds.setdefault(rec.dataset_fp, rec)
        rows = []
        for rec in ok:
            tag = rec.config["method"]["tag"]
            base = base_by_ds.get(rec.dataset_fp)
            if tag == baseline_tag or base is None:
                continue
            try:
                deltas = iosm(rec.reports["best_test"], base.reports["best_test"])
            except Exception:
                continue
            for key, d in sorted(deltas.items()):
                rows.append([tag, rec.trial_id, group_key_str(key), d])
        if rows:
            path = out_dir / "iosm.csv"
            write_csv(path, ["method", "trial_id", "group", "improvement"], rows)
            written.append(path)

    return written
