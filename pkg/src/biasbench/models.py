"""Model zoo: a small grid-image CNN and an MLP for vector tasks.

Both expose ``forward(x) -> (logits, features)`` so objectives that attach
heads or reweight on features work unchanged across architectures.  The CNN
has four convolution+ReLU stages with a single max-pool after the first;
the optional coordinate channels (normalized x/y maps) are appended to the
inputs of the stages just before and just after that pool, giving the
otherwise translation-invariant stack access to absolute position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn


@dataclass
class ModelSpec:
    arch: str = "grid_cnn"                      # grid_cnn | mlp
    num_classes: int = 10
    channels: list = field(default_factory=lambda: [16, 32, 64, 64])
    hidden: list = field(default_factory=lambda: [64, 64])
    coord_channels: bool = False
    in_channels: int = 3                         # grid_cnn
    input_dim: int = 8                           # mlp

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "num_classes": self.num_classes,
            "channels": list(self.channels),
            "hidden": list(self.hidden),
            "coord_channels": self.coord_channels,
            "in_channels": self.in_channels,
            "input_dim": self.input_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


def _coord_maps(n, h, w, device, dtype):
    ys = torch.linspace(-1.0, 1.0, h, device=device, dtype=dtype)
    xs = torch.linspace(-1.0, 1.0, w, device=device, dtype=dtype)
    yy = ys.view(1, 1, h, 1).expand(n, 1, h, w)
    xx = xs.view(1, 1, 1, w).expand(n, 1, h, w)
    return torch.cat([yy, xx], dim=1)


class GridCnn(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        if len(spec.channels) != 4:
            raise ValueError("grid_cnn needs exactly four channel sizes")
        self.coord = spec.coord_channels
        extra = 2 if self.coord else 0
        c1, c2, c3, c4 = spec.channels
        self.conv1 = nn.Conv2d(spec.in_channels + extra, c1, 3, padding=1)
        self.pool = nn.MaxPool2d(2)
        self.conv2 = nn.Conv2d(c1 + extra, c2, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(c2, c3, 3, stride=2, padding=1)
        self.conv4 = nn.Conv2d(c3, c4, 3, stride=2, padding=1)
        self.relu = nn.ReLU(inplace=True)
        self.gap = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(c4, spec.num_classes)
        self.feature_dim = c4

    def forward(self, x):
        if self.coord:
            x = torch.cat([x, _coord_maps(x.shape[0], x.shape[2], x.shape[3], x.device, x.dtype)], dim=1)
        h = self.pool(self.relu(self.conv1(x)))
        if self.coord:
            h = torch.cat([h, _coord_maps(h.shape[0], h.shape[2], h.shape[3], h.device, h.dtype)], dim=1)
        h = self.relu(self.conv2(h))
        h = self.relu(self.conv3(h))
        h = self.relu(self.conv4(h))
        feats = self.gap(h).flatten(1)
        return self.fc(feats), feats


class Mlp(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        dims = [spec.input_dim] + list(spec.hidden)
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(dims[:-1], dims[1:]))
        self.relu = nn.ReLU(inplace=True)
        self.fc = nn.Linear(dims[-1], spec.num_classes)
        self.feature_dim = dims[-1]

    def forward(self, x):
        h = x
        for layer in self.layers:
            h = self.relu(layer(h))
        return self.fc(h), h


def build_model(spec: ModelSpec, seed: int) -> nn.Module:
    """Construct a model with seed-determined initial parameters."""
    torch.manual_seed(seed)
    if spec.arch == "grid_cnn":
        return GridCnn(spec)
    if spec.arch == "mlp":
        return Mlp(spec)
    raise ValueError(f"unknown architecture {spec.arch!r}")
