"""Adversarial debiasing pieces: gradient reversal and the bias-prediction
head with entropy regularization.

The bias head learns to predict the explicit factor values from the shared
features; the reversal layer multiplies the gradient flowing back into the
feature extractor by a negative constant, so the features are pushed to be
uninformative about the factors.  A separate entropy term (computed with the
head frozen) additionally rewards features on which the head's predictions
are maximally uncertain.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .losses import softmax_entropy


class _GradScale(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, weight):
        ctx.weight = weight
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output * ctx.weight, None


def grad_reverse(x: torch.Tensor, weight: float) -> torch.Tensor:
    """Identity forward; backward multiplies the gradient by ``weight``
    (negative for adversarial reversal)."""
    return _GradScale.apply(x, weight)


class FactorHeads(nn.Module):
    """One linear probe per explicit factor, on the shared features."""

    def __init__(self, feature_dim: int, cardinalities):
        super().__init__()
        self.heads = nn.ModuleList(nn.Linear(feature_dim, c) for c in cardinalities)

    def forward(self, features):
        return [head(features) for head in self.heads]


def lnl_losses(
    features: torch.Tensor,
    class_logits: torch.Tensor,
    labels: torch.Tensor,
    bias_values: torch.Tensor,
    heads: FactorHeads,
    lambda_grad: float,
    lambda_ent: float,
):
    """(task CE, adversary CE, mean bias-prediction entropy).

    The adversary CE trains the heads and sends ``lambda_grad`` times its
    gradient into the feature extractor.  The entropy term reaches the
    feature extractor directly, with the head parameters detached so the
    adversary itself is not trained toward uniform output.
    """
    if lambda_ent < 0:
        raise ValueError("lambda_ent must be >= 0")
    task = F.cross_entropy(class_logits, labels)

    reversed_feats = grad_reverse(features, lambda_grad)
    adv_logits = heads(reversed_feats)
    adversary = sum(
        F.cross_entropy(lg, bias_values[:, j]) for j, lg in enumerate(adv_logits)
    ) / len(adv_logits)

    frozen = {k: v.detach() for k, v in heads.named_parameters()}
    ent_logits = torch.func.functional_call(heads, frozen, (features,))
    entropy = sum(softmax_entropy(lg) for lg in ent_logits) / len(ent_logits)

    return task, adversary, entropy
