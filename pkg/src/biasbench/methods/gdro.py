"""Worst-case group optimization via exponentiated-gradient group weights.

Keeps a probability vector q over training groups; each step multiplies
q_g by exp(eta * L_g) and renormalizes, then returns the q-weighted sum of
group losses.  Groups absent from the batch contribute zero loss and keep
their weight (up to renormalization).
"""

from __future__ import annotations

import torch


def group_mean_losses(sample_losses: torch.Tensor, group_ids: torch.Tensor, num_groups: int):
    """Per-group mean of sample losses; zero for groups absent in the batch."""
    device = sample_losses.device
    totals = torch.zeros(num_groups, dtype=sample_losses.dtype, device=device)
    totals = totals.index_add(0, group_ids, sample_losses)
    counts = torch.zeros(num_groups, dtype=sample_losses.dtype, device=device)
    counts = counts.index_add(0, group_ids, torch.ones_like(sample_losses))
    denom = counts + (counts == 0).to(counts.dtype)
    return totals / denom, counts


def gdro_step(group_losses: torch.Tensor, q: torch.Tensor, eta: float):
    """One weight update; returns (robust loss, new q).

    ``q`` must be a probability vector.  The update uses detached losses;
    the returned loss carries gradients only through ``group_losses``.
    """
    new_q = q * torch.exp(eta * group_losses.detach())
    new_q = new_q / new_q.sum()
    robust = (group_losses * new_q).sum()
    return robust, new_q


class GdroState:
    """Mutable q vector owned by one training loop."""

    def __init__(self, num_groups: int, eta: float, dtype=torch.float32):
        if eta < 0:
            raise ValueError("eta must be >= 0")
        self.eta = eta
        self.q = torch.ones(num_groups, dtype=dtype) / num_groups

    def step(self, group_losses: torch.Tensor) -> torch.Tensor:
        robust, self.q = gdro_step(group_losses, self.q.to(group_losses.dtype), self.eta)
        return robust

    def state_dict(self):
        return {"q": self.q.clone(), "eta": self.eta}

    def load_state_dict(self, state):
        self.q = state["q"].clone()
        self.eta = state["eta"]
