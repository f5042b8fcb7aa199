"""Per-batch loss building blocks shared by the training objectives.

All functions operate on torch tensors and stay differentiable; softmax and
cross-entropy go through torch's log-space kernels.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


class NumericError(Exception):
    pass


def stdm_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Plain mean cross-entropy (the un-mitigated baseline objective)."""
    if not torch.isfinite(logits).all():
        raise NumericError("non-finite logits")
    return F.cross_entropy(logits, labels)


def upweighted_loss(
    logits: torch.Tensor,
    labels: torch.Tensor,
    group_ids: torch.Tensor,
    group_counts: torch.Tensor,
) -> torch.Tensor:
    """Cross-entropy with per-sample weights 1/N_g, normalized over the batch."""
    if int(group_ids.max()) >= len(group_counts):
        raise KeyError(f"group id {int(group_ids.max())} not in count table")
    ce = F.cross_entropy(logits, labels, reduction="none")
    weights = 1.0 / group_counts.to(ce.dtype)[group_ids]
    return (weights * ce).sum() / weights.sum()


def gce_loss(scores: torch.Tensor, labels: torch.Tensor, gamma: float, eps: float = 1e-12) -> torch.Tensor:
    """Generalized cross-entropy (1 - s_y**gamma) / gamma, per sample.

    ``scores`` are softmax probabilities.  Deflates the loss of low-confidence
    samples relative to plain CE, which amplifies easy (bias-aligned)
    patterns; its logit gradient is s_y**gamma times the CE gradient.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma {gamma} outside (0, 1]")
    s_y = scores.gather(1, labels.view(-1, 1)).squeeze(1)
    s_y = s_y.clamp_min(eps)
    return (1.0 - s_y ** gamma) / gamma


def gce_loss_from_logits(logits: torch.Tensor, labels: torch.Tensor, gamma: float) -> torch.Tensor:
    return gce_loss(F.softmax(logits, dim=1), labels, gamma)


def lff_weights(loss_biased: torch.Tensor, loss_debiased: torch.Tensor) -> torch.Tensor:
    """Relative-difficulty weights L_b / (L_b + L_d), 1/2 when both vanish."""
    denom = loss_biased + loss_debiased
    half = torch.full_like(denom, 0.5)
    return torch.where(denom > 0, loss_biased / denom, half)


def rubi_combine(debias_logits: torch.Tensor, bias_logits: torch.Tensor) -> torch.Tensor:
    """Mask the main-branch logits with the sigmoided bias-branch logits."""
    if debias_logits.shape != bias_logits.shape:
        raise ValueError(
            f"shape mismatch: {tuple(debias_logits.shape)} vs {tuple(bias_logits.shape)}"
        )
    return debias_logits * torch.sigmoid(bias_logits)


def rubi_losses(debias_logits: torch.Tensor, bias_logits: torch.Tensor, labels: torch.Tensor):
    """(fused loss, bias-branch loss); inference uses the main branch alone."""
    fused = F.cross_entropy(rubi_combine(debias_logits, bias_logits), labels)
    bias = F.cross_entropy(bias_logits, labels)
    return fused, bias


def sd_penalty(logits: torch.Tensor, labels: torch.Tensor, lam, gamma) -> torch.Tensor:
    """Output decay (lam/2) * ||y_hat - gamma||^2, averaged over the batch.

    ``lam``/``gamma`` may be scalars or per-class vectors applied by each
    sample's label class.
    """
    lam_t = torch.as_tensor(lam, dtype=logits.dtype, device=logits.device)
    gam_t = torch.as_tensor(gamma, dtype=logits.dtype, device=logits.device)
    if (lam_t < 0).any():
        raise ValueError("negative decay weight")
    lam_i = lam_t[labels] if lam_t.ndim == 1 else lam_t
    gam_i = gam_t[labels].view(-1, 1) if gam_t.ndim == 1 else gam_t
    sq = ((logits - gam_i) ** 2).sum(dim=1)
    return (lam_i / 2.0 * sq).mean()


def softmax_entropy(logits: torch.Tensor) -> torch.Tensor:
    """Mean Shannon entropy of the softmax distribution, in nats."""
    logp = F.log_softmax(logits, dim=1)
    return -(logp.exp() * logp).sum(dim=1).mean()
