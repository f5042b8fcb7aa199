"""Two-stage grid search and tuning-distribution-controlled model selection.

Stage 1 sweeps learning rate x weight decay with the method's default
hyperparameters; stage 2 sweeps the method-specific grid at the stage-1
winner's (lr, wd).  Selection is the argmax of validation Acc(alpha) at a
configurable alpha, deterministic under ties and trial-list permutations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .methods import MethodConfig
from .training import TrainConfig

STAGE1_LRS = (1e-3, 1e-4, 1e-5)
STAGE1_WDS = (0.0, 0.1, 1e-3, 1e-5)


class SweepError(Exception):
    pass


@dataclass
class SelectionPolicy:
    alpha_select: float = 0.0


@dataclass
class SweepPlan:
    method_tag: str
    base: TrainConfig
    stage1_lrs: tuple = STAGE1_LRS
    stage1_wds: tuple = STAGE1_WDS
    stage2_grid: dict | None = None      # None -> the method's default grid
    seeds: tuple = (0, 1, 2)
    policy: SelectionPolicy = field(default_factory=SelectionPolicy)

    def resolved_stage2(self) -> dict:
        grid = self.stage2_grid
        if grid is None:
            grid = MethodConfig.stage2_grid(self.method_tag)
        return {k: list(v) for k, v in grid.items()}


def _ok(trials):
    return [t for t in trials if t.status == "ok"]


def select_model(trials, policy: SelectionPolicy):
    """Argmax of validation Acc(alpha_select); deterministic tie-breaks.

    Ties go to lower learning rate, then higher weight decay, then lowest
    seed, then trial id, so the result is independent of list order.
    """
    candidates = _ok(list(trials))
    if not candidates:
        raise SweepError("no successful trials to select from")

    def sort_key(t):
        return (
            -t.val_acc(policy.alpha_select),
            t.config["lr"],
            -t.config["weight_decay"],
            t.config["seed"],
            t.trial_id,
        )

    return sorted(candidates, key=sort_key)[0]


def run_sweep(plan: SweepPlan, dataset, store, dataset_ref: str = "", log=None) -> list:
    """Execute the two-stage plan through the store (resumable by content id)."""

    def say(msg):
        if log:
            log(msg)

    def run_one(lr, wd, seed, params):
        cfg = replace(
            plan.base,
            lr=lr,
            weight_decay=wd,
            seed=seed,
            method=MethodConfig(plan.method_tag, dict(params)),
        )
        return store.get_or_run(dataset, cfg, dataset_ref=dataset_ref)

    stage1 = []
    for lr in plan.stage1_lrs:
        for wd in plan.stage1_wds:
            for seed in plan.seeds:
                rec = run_one(lr, wd, seed, MethodConfig(plan.method_tag).params)
                say(f"stage1 lr={lr} wd={wd} seed={seed} -> {rec.status}")
                stage1.append(rec)
    if not _ok(stage1):
        raise SweepError("every stage-1 trial diverged")
    winner = select_model(stage1, plan.policy)
    best_lr = winner.config["lr"]
    best_wd = winner.config["weight_decay"]
    say(f"stage1 winner lr={best_lr} wd={best_wd}")

    stage2 = []
    grid = plan.resolved_stage2()
    if grid:
        names = sorted(grid)
        for combo in product(*(grid[k] for k in names)):
            params = dict(MethodConfig(plan.method_tag).params)
            params.update(dict(zip(names, combo)))
            for seed in plan.seeds:
                rec = run_one(best_lr, best_wd, seed, params)
                say(f"stage2 {dict(zip(names, combo))} seed={seed} -> {rec.status}")
                stage2.append(rec)
    return stage1 + stage2


def group_key_str(key) -> str:
    return ",".join(str(v) for v in key)


def selection_sensitivity(trials, alpha_grid):
    """Per-alpha winners and the spread of their per-group test accuracies.

    Returns the numeric series behind the tuning-distribution plots: one
    winner per alpha with its per-group test accuracies, per-group
    min/max/range across alphas, and the minority-vs-majority summary
    (minority = rarest test group; majority = mean over the rest).
    """
    candidates = _ok(list(trials))
    if not candidates:
        raise SweepError("no successful trials")
    table0 = candidates[0].reports["best_test"].group_table
    keys = table0.keys
    minority_key = keys[int(np.argmin(table0.counts))]

    winners = []
    for alpha in alpha_grid:
        w = select_model(candidates, SelectionPolicy(alpha_select=float(alpha)))
        table = w.reports["best_test"].group_table
        accs = dict(zip(table.keys, table.accuracies()))
        winners.append(
            {
                "alpha": float(alpha),
                "trial_id": w.trial_id,
                "test_unbiased": w.reports["best_test"].acc_by_alpha.get(0.0),
                "test_acc_by_group": {group_key_str(k): float(a) for k, a in accs.items()},
            }
        )

    group_ranges = {}
    for key in keys:
        vals = [w["test_acc_by_group"][group_key_str(key)] for w in winners]
        group_ranges[group_key_str(key)] = {
            "min": min(vals),
            "max": max(vals),
            "range": max(vals) - min(vals),
        }

    majority_means = []
    for w in winners:
        rest = [v for k, v in w["test_acc_by_group"].items() if k != group_key_str(minority_key)]
        majority_means.append(float(np.mean(rest)))

    return {
        "winners": winners,
        "group_ranges": group_ranges,
        "minority_key": group_key_str(minority_key),
        "minority_range": group_ranges[group_key_str(minority_key)]["range"],
        "majority_mean_range": max(majority_means) - min(majority_means),
    }
