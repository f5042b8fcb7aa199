"""One driver per training objective, all speaking the same protocol.

A driver owns whatever the objective adds on top of the main model (a bias
branch, group weights, a second network), computes the per-batch loss
breakdown, and names the batch sampler it needs.  ``parts["total"]`` is the
quantity backpropagated; ``parts["task"]`` is the component that trains the
main classifier (the piece that collapses to the plain objective at each
method's neutral hyperparameters).
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from . import gdro, irm, lnl, losses


class MethodDriver:
    sampler = "shuffle"
    uses_bias_values = False

    def setup(self, model, task, seed: int) -> None:
        self.model = model
        self.task_info = task

    def aux_modules(self):
        return []

    def aux_parameters(self):
        for m in self.aux_modules():
            yield from m.parameters()

    def compute(self, batch) -> dict:
        raise NotImplementedError

    def state_dict(self):
        return {}

    def load_state_dict(self, state):
        pass


class StdmDriver(MethodDriver):
    def compute(self, batch):
        logits, _ = self.model(batch["x"])
        ce = losses.stdm_loss(logits, batch["y"])
        return {"total": ce, "task": ce}


class UpWtDriver(MethodDriver):
    def setup(self, model, task, seed):
        super().setup(model, task, seed)
        self.group_counts = torch.as_tensor(task.group_counts)

    def compute(self, batch):
        logits, _ = self.model(batch["x"])
        loss = losses.upweighted_loss(logits, batch["y"], batch["group_ids"], self.group_counts)
        return {"total": loss, "task": loss}


class GdroDriver(MethodDriver):
    sampler = "group_balanced"

    def __init__(self, eta: float):
        self.eta = eta

    def setup(self, model, task, seed):
        super().setup(model, task, seed)
        self.state = gdro.GdroState(task.num_groups, self.eta)

    def compute(self, batch):
        logits, _ = self.model(batch["x"])
        ce = F.cross_entropy(logits, batch["y"], reduction="none")
        group_losses, _ = gdro.group_mean_losses(ce, batch["group_ids"], self.task_info.num_groups)
        robust = self.state.step(group_losses)
        return {"total": robust, "task": robust, "q_max": float(self.state.q.max())}

    def state_dict(self):
        return {"gdro": self.state.state_dict()}

    def load_state_dict(self, state):
        self.state.load_state_dict(state["gdro"])


class RubiDriver(MethodDriver):
    """Two-branch fusion; the bias branch reads the explicit factor values."""

    uses_bias_values = True

    def setup(self, model, task, seed):
        super().setup(model, task, seed)
        self.cards = list(task.explicit_cardinalities)
        torch.manual_seed(seed + 0x5B1)
        self.bias_net = nn.Sequential(
            nn.Linear(sum(self.cards), 64),
            nn.ReLU(inplace=True),
            nn.Linear(64, task.num_classes),
        )

    def aux_modules(self):
        return [self.bias_net]

    def _bias_input(self, bias_values):
        hots = [F.one_hot(bias_values[:, j], c).float() for j, c in enumerate(self.cards)]
        return torch.cat(hots, dim=1)

    def compute(self, batch):
        logits_d, _ = self.model(batch["x"])
        logits_b = self.bias_net(self._bias_input(batch["bias_values"]))
        fused, bias_ce = losses.rubi_losses(logits_d, logits_b, batch["y"])
        return {"total": fused + bias_ce, "task": fused, "bias_ce": float(bias_ce.detach())}


class LnlDriver(MethodDriver):
    uses_bias_values = True

    def __init__(self, lambda_grad: float, lambda_ent: float):
        self.lambda_grad = lambda_grad
        self.lambda_ent = lambda_ent

    def setup(self, model, task, seed):
        super().setup(model, task, seed)
        torch.manual_seed(seed + 0x7A2)
        self.heads = lnl.FactorHeads(task.feature_dim, task.explicit_cardinalities)

    def aux_modules(self):
        return [self.heads]

    def compute(self, batch):
        logits, feats = self.model(batch["x"])
        task, adversary, entropy = lnl.lnl_losses(
            feats, logits, batch["y"], batch["bias_values"], self.heads,
            self.lambda_grad, self.lambda_ent,
        )
        total = task + adversary - self.lambda_ent * entropy
        return {"total": total, "task": task, "adversary": float(adversary.detach()), "entropy": float(entropy.detach())}


class IrmDriver(MethodDriver):
    sampler = "environment"

    def __init__(self, lam: float, envs_per_batch: int = 16):
        self.lam = lam
        self.envs_per_batch = envs_per_batch

    def compute(self, batch):
        logits, _ = self.model(batch["x"])
        risk, penalty = irm.irmv1_penalty(logits, batch["y"], batch["group_ids"], self.lam)
        return {"total": risk + penalty, "task": risk, "penalty": float(penalty.detach())}


class LffDriver(MethodDriver):
    """Trains a bias-amplified twin alongside the main model and upweights
    the samples the twin finds hard."""

    def __init__(self, gamma: float):
        self.gamma = gamma

    def setup(self, model, task, seed):
        super().setup(model, task, seed)
        self.biased = task.build_aux_model(seed + 0x1FF)

    def aux_modules(self):
        return [self.biased]

    def compute(self, batch):
        logits_d, _ = self.model(batch["x"])
        logits_b, _ = self.biased(batch["x"])
        amplifier = losses.gce_loss_from_logits(logits_b, batch["y"], self.gamma).mean()
        ce_d = F.cross_entropy(logits_d, batch["y"], reduction="none")
        ce_b = F.cross_entropy(logits_b, batch["y"], reduction="none")
        w = losses.lff_weights(ce_b.detach(), ce_d.detach())
        task = (w * ce_d).sum() / w.sum()
        return {"total": task + amplifier, "task": task, "amplifier": float(amplifier.detach())}


class SdDriver(MethodDriver):
    def __init__(self, lam, gamma):
        self.lam = lam
        self.gamma = gamma

    def compute(self, batch):
        logits, _ = self.model(batch["x"])
        ce = losses.stdm_loss(logits, batch["y"])
        penalty = losses.sd_penalty(logits, batch["y"], self.lam, self.gamma)
        return {"total": ce + penalty, "task": ce, "penalty": float(penalty.detach())}
