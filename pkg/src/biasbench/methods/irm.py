"""Invariance penalty: squared gradient of each environment's risk with
respect to a frozen unit scale on the logits.

An environment here is an explicit data group.  The penalty for environment
e is (d/dw CE(w * logits_e, y_e))^2 evaluated at w = 1; a representation on
which the same (unit) classifier is simultaneously optimal across
environments drives every term to zero.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


def unit_scale_penalty(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Squared derivative of CE(w * logits) at w=1 for one environment."""
    scale = torch.ones((), dtype=logits.dtype, device=logits.device, requires_grad=True)
    loss = F.cross_entropy(logits * scale, labels)
    (grad,) = torch.autograd.grad(loss, [scale], create_graph=True)
    return grad ** 2


def irmv1_penalty(logits: torch.Tensor, labels: torch.Tensor, env_ids: torch.Tensor, lam: float):
    """(pooled empirical risk, lam * sum of per-environment penalties).

    The risk is the pooled mean cross-entropy (environments weighted by
    their batch share), so a zero penalty weight recovers the plain
    objective exactly.  Environments absent from the batch are skipped;
    single-sample environments are allowed.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    risk = F.cross_entropy(logits, labels)
    penalty = logits.new_zeros(())
    for e in torch.unique(env_ids):
        mask = env_ids == e
        penalty = penalty + unit_scale_penalty(logits[mask], labels[mask])
    return risk, lam * penalty
