"""Training loop, evaluation and the persisted trial record.

One trial = one (dataset, config) pair run to completion on a single device.
Everything that lands in the record payload is a deterministic function of
those two inputs: model init and batch order come from the config seed, and
all evaluation is exact arithmetic over the split.  Wall-clock metadata is
kept out of the payload so identical runs serialize identically.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .data.generate import LoadedDataset, SplitArrays
from .groups import assign_groups
from .methods import MethodConfig, build_driver
from .methods.losses import NumericError
from .metrics import EvalReport, MetricError, acc_alpha, mmd, tail_accuracy
from .models import ModelSpec, build_model

DEFAULT_ALPHA_GRID = (-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0)
DEFAULT_BETA_GRID = (0.2, 0.5, 1.0, 2.0)


class TrainingError(Exception):
    pass


@dataclass
class TrainConfig:
    method: MethodConfig
    model: ModelSpec
    epochs: int = 30                 # full-protocol default; tests run far fewer
    optimizer: str = "adam"
    lr: float = 1e-3
    weight_decay: float = 1e-5
    batch_size: int = 128
    seed: int = 0
    explicit_factors: list = field(default_factory=list)
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    beta_grid: tuple = DEFAULT_BETA_GRID
    alpha_select: float = 0.0
    group_sampling: str = "uniform"   # uniform over groups, or "prior" weighted
    save_checkpoints: bool = False

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.group_sampling not in ("uniform", "prior"):
            raise ValueError(f"unknown group sampling {self.group_sampling!r}")

    def to_dict(self) -> dict:
        # save_checkpoints is omitted: it does not affect the trained model
        return {
            "method": self.method.to_dict(),
            "model": self.model.to_dict(),
            "epochs": self.epochs,
            "optimizer": self.optimizer,
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "explicit_factors": list(self.explicit_factors),
            "alpha_grid": list(self.alpha_grid),
            "beta_grid": list(self.beta_grid),
            "alpha_select": self.alpha_select,
            "group_sampling": self.group_sampling,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["method"] = MethodConfig.from_dict(d["method"])
        d["model"] = ModelSpec.from_dict(d["model"])
        d["alpha_grid"] = tuple(d.get("alpha_grid", DEFAULT_ALPHA_GRID))
        d["beta_grid"] = tuple(d.get("beta_grid", DEFAULT_BETA_GRID))
        return cls(**d)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def dataset_fingerprint(dataset: LoadedDataset) -> str:
    return hashlib.sha256(canonical_json(dataset.manifest.header).encode()).hexdigest()[:16]


def trial_id(dataset_fp: str, cfg: TrainConfig) -> str:
    payload = canonical_json({"dataset": dataset_fp, "config": cfg.to_dict()})
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Batch samplers.  All take a numpy Generator so batch order is part of the
# seeded trial state.

def shuffle_batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def group_balanced_batches(group_indices, n_batches, batch_size, rng, weights=None):
    """Each batch draws its samples group-first (uniform or prior-weighted)."""
    n_groups = len(group_indices)
    sizes = np.array([len(g) for g in group_indices])
    for _ in range(n_batches):
        gsel = rng.choice(n_groups, size=batch_size, p=weights)
        offsets = rng.integers(0, sizes[gsel])
        yield np.array([group_indices[g][o] for g, o in zip(gsel, offsets)])


def environment_batches(group_indices, n_batches, batch_size, envs_per_batch, rng):
    """Each batch covers a random subset of environments, equally."""
    n_envs = len(group_indices)
    k = min(envs_per_batch, n_envs)
    per_env = max(1, batch_size // k)
    sizes = np.array([len(g) for g in group_indices])
    for _ in range(n_batches):
        envs = rng.choice(n_envs, size=k, replace=False)
        idx = []
        for e in envs:
            offsets = rng.integers(0, sizes[e], size=per_env)
            idx.append(group_indices[e][offsets])
        yield np.concatenate(idx)


# ---------------------------------------------------------------------------

@dataclass
class TaskInfo:
    num_classes: int
    feature_dim: int
    explicit_cardinalities: list
    num_groups: int
    group_counts: np.ndarray
    build_aux_model: object


def _explicit_indices(dataset: LoadedDataset, explicit_factors) -> list:
    names = dataset.factor_names
    missing = [f for f in explicit_factors if f not in names]
    if missing:
        raise TrainingError(f"explicit factors {missing} not in dataset factors {names}")
    return [names.index(f) for f in explicit_factors]


def _x_tensor(x_np: np.ndarray, task: str) -> torch.Tensor:
    # copy: the source may be a read-only memmap slice
    arr = np.array(x_np, dtype=np.float32)
    if task == "grid_images":
        return torch.from_numpy(arr / 255.0).permute(0, 3, 1, 2)
    return torch.from_numpy(arr)


@dataclass
class TrialRecord:
    trial_id: str
    dataset_ref: str
    dataset_fp: str
    config: dict
    status: str = "ok"          # ok | diverged | aborted
    diagnostics: dict | None = None
    epoch_metrics: list = field(default_factory=list)
    best_epoch: int | None = None
    reports: dict = field(default_factory=dict)   # name -> EvalReport
    meta: dict = field(default_factory=dict)
    checkpoints: dict | None = None   # in-memory only; the store archives them

    def val_acc(self, alpha: float) -> float:
        report = self.reports.get("best_val")
        if report is None:
            raise TrainingError(f"trial {self.trial_id} has no validation report")
        return report.acc_by_alpha[alpha]

    def payload_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "dataset_ref": self.dataset_ref,
            "dataset_fp": self.dataset_fp,
            "config": self.config,
            "status": self.status,
            "diagnostics": self.diagnostics,
            "epoch_metrics": self.epoch_metrics,
            "best_epoch": self.best_epoch,
            "reports": {name: r.to_lines() for name, r in sorted(self.reports.items())},
        }

    def to_dict(self) -> dict:
        d = self.payload_dict()
        d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        reports = {name: EvalReport.from_lines(lines) for name, lines in d.get("reports", {}).items()}
        return cls(
            trial_id=d["trial_id"],
            dataset_ref=d["dataset_ref"],
            dataset_fp=d["dataset_fp"],
            config=d["config"],
            status=d["status"],
            diagnostics=d.get("diagnostics"),
            epoch_metrics=d.get("epoch_metrics", []),
            best_epoch=d.get("best_epoch"),
            reports=reports,
            meta=d.get("meta", {}),
        )


def _environment_fingerprint() -> dict:
    return {
        "python": platform.python_version(),
        "torch": torch.__version__,
        "numpy": np.__version__,
        "platform": platform.platform(),
    }


def evaluate(
    model,
    split: SplitArrays,
    dataset: LoadedDataset,
    explicit_factors,
    alpha_grid=DEFAULT_ALPHA_GRID,
    beta_grid=DEFAULT_BETA_GRID,
    split_name: str = "test",
    batch_size: int = 512,
) -> EvalReport:
    """Full metric report for one model on one split; deterministic."""
    expl_idx = _explicit_indices(dataset, explicit_factors)
    model.eval()
    preds = np.empty(len(split), dtype=np.int64)
    with torch.no_grad():
        for start in range(0, len(split), batch_size):
            xb = _x_tensor(split.x[start:start + batch_size], dataset.task)
            logits, _ = model(xb)
            preds[start:start + len(logits)] = logits.argmax(dim=1).numpy()
    correct = preds == split.y

    _, table = assign_groups(split.y, split.b, expl_idx, correct)
    acc = {float(a): acc_alpha(table, float(a)) for a in alpha_grid}

    majmin = {}
    for j, name in enumerate(dataset.factor_names):
        flags = split.maj[:, j]
        try:
            mmd(correct, flags, name)  # raises when one side is empty
        except MetricError:
            continue
        majmin[name] = (float(correct[flags].mean()), float(correct[~flags].mean()))

    tails = {}
    if expl_idx:
        local = [tuple(int(v) for v in row) for row in split.b[:, expl_idx]]
    else:
        local = [0] * len(split)
    for beta in beta_grid:
        try:
            tails[float(beta)] = tail_accuracy(local, split.y, correct, float(beta))
        except MetricError:
            continue

    return EvalReport(
        split=split_name,
        explicit_factors=list(explicit_factors),
        group_table=table,
        acc_by_alpha=acc,
        majmin_by_factor=majmin,
        tail_by_beta=tails,
        overall=float(correct.mean()),
    )


def train(dataset: LoadedDataset, cfg: TrainConfig, dataset_ref: str = "") -> TrialRecord:
    """Run one trial: the configured objective for the configured epochs."""
    torch.set_num_threads(1)
    fp = dataset_fingerprint(dataset)
    record = TrialRecord(
        trial_id=trial_id(fp, cfg),
        dataset_ref=dataset_ref,
        dataset_fp=fp,
        config=cfg.to_dict(),
        meta={"created_at": time.strftime("%Y-%m-%dT%H:%M:%S"), "env": _environment_fingerprint()},
    )

    train_split = dataset.splits["train"]
    expl_idx = _explicit_indices(dataset, cfg.explicit_factors)
    gids, group_table = assign_groups(train_split.y, train_split.b, expl_idx)
    group_indices = [np.flatnonzero(gids == g) for g in range(len(group_table.keys))]

    model = build_model(cfg.model, cfg.seed)
    driver = build_driver(cfg.method)
    if driver.uses_bias_values and not expl_idx:
        raise TrainingError(f"{cfg.method.tag} requires at least one explicit factor")
    task = TaskInfo(
        num_classes=dataset.num_classes,
        feature_dim=model.feature_dim,
        explicit_cardinalities=[dataset.factor_cardinalities[j] for j in expl_idx],
        num_groups=len(group_table.keys),
        group_counts=group_table.counts.copy(),
        build_aux_model=lambda seed: build_model(cfg.model, seed),
    )
    driver.setup(model, task, cfg.seed)

    params = list(model.parameters()) + list(driver.aux_parameters())
    if cfg.optimizer == "adam":
        optim = torch.optim.Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    else:
        optim = torch.optim.SGD(params, lr=cfg.lr, weight_decay=cfg.weight_decay)

    rng = np.random.default_rng(cfg.seed)
    n = len(train_split)
    n_batches = math.ceil(n / cfg.batch_size)
    y_all = torch.from_numpy(train_split.y)
    gid_all = torch.from_numpy(gids)
    bias_all = torch.from_numpy(train_split.b[:, expl_idx]) if expl_idx else None

    def batches():
        if driver.sampler == "group_balanced":
            weights = None
            if cfg.group_sampling == "prior":
                weights = group_table.counts / group_table.counts.sum()
            yield from group_balanced_batches(group_indices, n_batches, cfg.batch_size, rng, weights)
        elif driver.sampler == "environment":
            yield from environment_batches(
                group_indices, n_batches, cfg.batch_size,
                int(cfg.method.params.get("envs_per_batch", 16)), rng,
            )
        else:
            yield from shuffle_batches(n, cfg.batch_size, rng)

    def snapshot():
        state = {"model": copy.deepcopy(model.state_dict()), "driver": copy.deepcopy(driver.state_dict())}
        state["aux"] = [copy.deepcopy(m.state_dict()) for m in driver.aux_modules()]
        return state

    def restore(state):
        model.load_state_dict(state["model"])
        driver.load_state_dict(state["driver"])
        for m, s in zip(driver.aux_modules(), state["aux"]):
            m.load_state_dict(s)

    def quick_val():
        return evaluate(
            model, dataset.splits["val"], dataset, cfg.explicit_factors,
            cfg.alpha_grid, cfg.beta_grid, split_name="val",
        )

    best_state = snapshot()
    best_acc = -1.0
    diverged = False
    for epoch in range(cfg.epochs):
        model.train()
        for m in driver.aux_modules():
            m.train()
        epoch_loss, seen = 0.0, 0
        for bi, idx in enumerate(batches()):
            batch = {
                "x": _x_tensor(train_split.x[idx], dataset.task),
                "y": y_all[idx],
                "group_ids": gid_all[idx],
            }
            if bias_all is not None:
                batch["bias_values"] = bias_all[idx]
            try:
                parts = driver.compute(batch)
                loss = parts["total"]
                finite = bool(torch.isfinite(loss))
            except NumericError:
                finite = False
                loss = None
            if not finite:
                record.status = "diverged"
                record.diagnostics = {
                    "epoch": epoch,
                    "batch": bi,
                    "loss": "non-finite" if loss is None else str(float(loss.detach())),
                }
                diverged = True
                break
            optim.zero_grad()
            loss.backward()
            optim.step()
            epoch_loss += float(loss.detach()) * len(idx)
            seen += len(idx)
        if diverged:
            break
        val_report = quick_val()
        sel = val_report.acc_by_alpha[cfg.alpha_select]
        record.epoch_metrics.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / max(seen, 1),
                "val_overall": val_report.overall,
                "val_acc_alpha": {str(a): v for a, v in val_report.acc_by_alpha.items()},
            }
        )
        if sel > best_acc:
            best_acc = sel
            record.best_epoch = epoch
            best_state = snapshot()

    if not diverged:
        final_state = snapshot()
        record.reports["final_val"] = quick_val()
        record.reports["final_test"] = evaluate(
            model, dataset.splits["test"], dataset, cfg.explicit_factors,
            cfg.alpha_grid, cfg.beta_grid, split_name="test",
        )
        restore(best_state)
        record.reports["best_val"] = quick_val()
        record.reports["best_test"] = evaluate(
            model, dataset.splits["test"], dataset, cfg.explicit_factors,
            cfg.alpha_grid, cfg.beta_grid, split_name="test",
        )
        restore(final_state)
        if cfg.save_checkpoints:
            record.checkpoints = {"best": best_state["model"], "final": final_state["model"]}
    return record


# ---------------------------------------------------------------------------
# Parameter archives: a flat npz of arrays plus a manifest of shapes, so a
# checkpoint can be inspected and validated without instantiating the model.

CHECKPOINT_VERSION = 1


def save_checkpoint(path_prefix, model) -> None:
    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    np.savez(str(path_prefix) + ".npz", **state)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "params": {k: {"shape": list(v.shape), "dtype": str(v.dtype)} for k, v in state.items()},
    }
    with open(str(path_prefix) + ".manifest.json", "w") as fh:
        fh.write(canonical_json(manifest))


def load_checkpoint(path_prefix, model) -> None:
    with open(str(path_prefix) + ".manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise TrainingError(f"unsupported checkpoint version {manifest.get('version')}")
    arrays = np.load(str(path_prefix) + ".npz")
    expected = {k: tuple(v.shape) for k, v in model.state_dict().items()}
    for name, info in manifest["params"].items():
        if name not in expected:
            raise TrainingError(f"checkpoint parameter {name!r} not in model")
        if tuple(info["shape"]) != expected[name]:
            raise TrainingError(
                f"shape mismatch for {name!r}: checkpoint {info['shape']}, model {list(expected[name])}"
            )
    model.load_state_dict({k: torch.from_numpy(arrays[k]) for k in arrays.files})
