"""Evaluation metrics over group tables and per-sample outcomes.

``acc_alpha`` re-weights per-group accuracies by group priors raised to a
power: alpha=0 weighs groups equally (the headline robustness number),
alpha=1 recovers overall accuracy, negative alpha emphasizes rare groups and
alpha>1 amplifies the dataset bias.  ``mmd`` is the accuracy gap between
class-aligned and non-aligned samples of one factor; ``iosm`` the per-group
gain over a baseline report; ``tail_accuracy`` restricts scoring to answer
classes that are rare within their local group.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .groups import GroupTable


class MetricError(Exception):
    pass


def acc_alpha(table: GroupTable, alpha: float) -> float:
    """Prior-exponentiated group accuracy sum(p^a * acc) / sum(p^a)."""
    if len(table.keys) == 0:
        raise MetricError("empty group table")
    accs = table.accuracies()
    if alpha == 0.0:
        return float(accs.mean())
    # Weights computed in log space: large |alpha| would overflow p**alpha.
    log_w = alpha * np.log(table.priors())
    log_w -= log_w.max()
    w = np.exp(log_w)
    return float((w * accs).sum() / w.sum())


def mmd(correct, majority_flags, factor_name: str = "") -> float:
    """Majority/minority accuracy difference for one factor."""
    correct = np.asarray(correct, dtype=bool)
    majority_flags = np.asarray(majority_flags, dtype=bool)
    n_maj = int(majority_flags.sum())
    if n_maj == 0 or n_maj == len(majority_flags):
        side = "majority" if n_maj == 0 else "minority"
        raise MetricError(f"mmd undefined for factor {factor_name!r}: empty {side} side")
    return float(correct[majority_flags].mean() - correct[~majority_flags].mean())


def iosm(report: "EvalReport", baseline: "EvalReport") -> dict:
    """Per-group accuracy delta over a baseline evaluated on the same keying."""
    a, b = report.group_table, baseline.group_table
    if a.keys != b.keys:
        raise MetricError("group keys differ between report and baseline")
    deltas = a.accuracies() - b.accuracies()
    return {key: float(d) for key, d in zip(a.keys, deltas)}


def tail_accuracy(local_groups, answers, correct, beta: float) -> float:
    """Accuracy over samples whose answer class is rare in its local group.

    Within each local group, an answer class with count at most
    ``(1 + beta) * mean_count`` is a tail class.
    """
    if beta < 0:
        raise MetricError("beta must be >= 0")
    answers = np.asarray(answers)
    correct = np.asarray(correct, dtype=bool)
    counts = defaultdict(Counter)
    for g, a in zip(local_groups, answers):
        counts[g][int(a)] += 1
    tail_sets = {}
    for g, ctr in counts.items():
        mean = sum(ctr.values()) / len(ctr)
        tail_sets[g] = {a for a, c in ctr.items() if c <= (1.0 + beta) * mean}
    mask = np.array([int(a) in tail_sets[g] for g, a in zip(local_groups, answers)])
    if not mask.any():
        raise MetricError(f"no tail samples at beta={beta}")
    return float(correct[mask].mean())


@dataclass
class EvalReport:
    """All metrics from one model evaluation on one split."""

    split: str
    explicit_factors: list
    group_table: GroupTable
    acc_by_alpha: dict = field(default_factory=dict)     # alpha -> Acc(alpha)
    majmin_by_factor: dict = field(default_factory=dict) # factor -> (maj acc, min acc)
    tail_by_beta: dict = field(default_factory=dict)     # beta -> tail accuracy
    overall: float = 0.0

    def unbiased_accuracy(self) -> float:
        return self.acc_by_alpha.get(0.0, acc_alpha(self.group_table, 0.0))

    @property
    def mmd_by_factor(self) -> dict:
        return {f: maj - mn for f, (maj, mn) in self.majmin_by_factor.items()}

    def to_lines(self) -> list:
        lines = [
            {
                "kind": "biasbench-evalreport",
                "version": 1,
                "split": self.split,
                "explicit_factors": list(self.explicit_factors),
                "overall": self.overall,
            }
        ]
        for key, n, c in zip(self.group_table.keys, self.group_table.counts, self.group_table.correct):
            lines.append({"group": list(key), "n": int(n), "correct": int(c)})
        for a, v in sorted(self.acc_by_alpha.items()):
            lines.append({"metric": "acc_alpha", "alpha": a, "value": v})
        for f, (maj, mn) in self.majmin_by_factor.items():
            lines.append({"metric": "factor_accuracy", "factor": f, "majority": maj, "minority": mn})
        for b, v in sorted(self.tail_by_beta.items()):
            lines.append({"metric": "tail_accuracy", "beta": b, "value": v})
        return lines

    def dumps(self) -> str:
        return "\n".join(json.dumps(ln, sort_keys=True, separators=(",", ":")) for ln in self.to_lines()) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_lines(cls, lines) -> "EvalReport":
        header = lines[0]
        if header.get("kind") != "biasbench-evalreport":
            raise MetricError("not an evaluation report")
        keys, counts, correct = [], [], []
        acc, majmin, tails = {}, {}, {}
        for ln in lines[1:]:
            if "group" in ln:
                keys.append(tuple(ln["group"]))
                counts.append(ln["n"])
                correct.append(ln["correct"])
            elif ln.get("metric") == "acc_alpha":
                acc[float(ln["alpha"])] = ln["value"]
            elif ln.get("metric") == "factor_accuracy":
                majmin[ln["factor"]] = (ln["majority"], ln["minority"])
            elif ln.get("metric") == "tail_accuracy":
                tails[float(ln["beta"])] = ln["value"]
        table = GroupTable(keys=keys, counts=np.array(counts), correct=np.array(correct))
        return cls(
            split=header["split"],
            explicit_factors=list(header["explicit_factors"]),
            group_table=table,
            acc_by_alpha=acc,
            majmin_by_factor=majmin,
            tail_by_beta=tails,
            overall=header["overall"],
        )

    @classmethod
    def loads(cls, text: str) -> "EvalReport":
        return cls.from_lines([json.loads(ln) for ln in text.splitlines() if ln])

    @classmethod
    def load(cls, path) -> "EvalReport":
        with open(path) as fh:
            return cls.loads(fh.read())
