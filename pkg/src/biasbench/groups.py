"""Group assignment and per-group accounting.

A group is the combination of class label and the values of the selected
explicit bias factors, keyed as a flat tuple ``(y, b_1, .., b_E)``.  Only
populated groups appear in a table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GroupingError(Exception):
    pass


@dataclass
class GroupTable:
    """Counts and correct-counts per populated group, in sorted key order."""

    keys: list            # list of tuples (y, b_1, .., b_E)
    counts: np.ndarray    # (G,) int64
    correct: np.ndarray   # (G,) int64

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.correct = np.asarray(self.correct, dtype=np.int64)
        if (self.counts <= 0).any():
            raise GroupingError("group table contains unpopulated groups")
        if ((self.correct < 0) | (self.correct > self.counts)).any():
            raise GroupingError("correct-counts outside [0, N_g]")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def priors(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def accuracies(self) -> np.ndarray:
        return self.correct / self.counts

    def overall_accuracy(self) -> float:
        return float(self.correct.sum() / self.counts.sum())

    def worst_group_accuracy(self) -> float:
        return float(self.accuracies().min())

    def as_dict(self) -> dict:
        return {
            key: {"n": int(n), "correct": int(c)}
            for key, n, c in zip(self.keys, self.counts, self.correct)
        }


def group_keys(labels, bias_values, explicit_indices) -> list:
    """Per-sample group key tuples for the selected factor columns."""
    labels = np.asarray(labels)
    bias_values = np.asarray(bias_values)
    if bias_values.ndim != 2:
        raise GroupingError("bias_values must be a 2-d array (samples x factors)")
    for j in explicit_indices:
        if j >= bias_values.shape[1]:
            raise GroupingError(f"sample records carry no value for factor column {j}")
    cols = [labels] + [bias_values[:, j] for j in explicit_indices]
    return [tuple(int(v) for v in row) for row in zip(*cols)]


def assign_groups(labels, bias_values, explicit_indices, correct=None):
    """Map samples to groups and tally a :class:`GroupTable`.

    Returns ``(group_ids, table)`` where ``group_ids[i]`` indexes
    ``table.keys``.  With an empty selection the groups are the classes.
    """
    keys = group_keys(labels, bias_values, explicit_indices)
    uniq = sorted(set(keys))
    index = {k: i for i, k in enumerate(uniq)}
    gids = np.array([index[k] for k in keys], dtype=np.int64)
    counts = np.bincount(gids, minlength=len(uniq)).astype(np.int64)
    if correct is None:
        corr = np.zeros(len(uniq), dtype=np.int64)
    else:
        corr = np.bincount(gids, weights=np.asarray(correct, dtype=np.float64), minlength=len(uniq))
        corr = np.round(corr).astype(np.int64)
    table = GroupTable(keys=uniq, counts=counts, correct=corr)
    return gids, table
