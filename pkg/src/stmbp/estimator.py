"""Clip-wise residual CNN + recurrent aggregation with joint interval/value heads.

Each clip (L frames x 12 ROI-channel features) goes through one shared
residual CNN. The per-clip embeddings are run through a (bi)LSTM across clips
and concatenated into the feature vector F. A linear classifier scores the
four BP intervals from F; the value head regresses absolute BP from F joined
with the class logits. The final estimate blends the predicted interval's
reference value with the regressed value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F_

from .errors import ConfigError, NumericalError
from .sampler import N_GROUPS, assign_group

N_FEATURES = 12  # 4 ROIs x 3 channels


@dataclass
class ModelConfig:
    clip_length: int = 150
    n_clips: int = 3
    channels: tuple[int, ...] = (16, 32)
    blocks: tuple[int, ...] = (2, 2)
    pool: int = 2
    hidden: int = 32
    bidirectional: bool = True
    reg_hidden: int = 32
    input_gain: float = 100.0
    center_clips: bool = True
    alpha: float = 0.5
    beta: float = 0.5
    sbp_refs: tuple[float, ...] = (100.0, 115.0, 130.0, 150.0)
    dbp_refs: tuple[float, ...] = (65.0, 75.0, 85.0, 95.0)

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.blocks = tuple(int(b) for b in self.blocks)
        self.sbp_refs = tuple(float(v) for v in self.sbp_refs)
        self.dbp_refs = tuple(float(v) for v in self.dbp_refs)
        if self.clip_length < 1 or self.n_clips < 1:
            raise ConfigError("clip_length and n_clips must be >= 1")
        if not self.channels or len(self.channels) != len(self.blocks):
            raise ConfigError("channels and blocks need one entry per stage")
        if min(self.channels) < 1 or min(self.blocks) < 0 or self.pool < 1:
            raise ConfigError("channels/pool must be positive and blocks non-negative")
        if self.alpha < 0 or self.beta < 0 or not math.isclose(self.alpha + self.beta, 1.0, abs_tol=1e-12):
            raise ConfigError(f"alpha and beta must be non-negative and sum to 1, got {self.alpha}, {self.beta}")
        for name in ("sbp_refs", "dbp_refs"):
            refs = getattr(self, name)
            if len(refs) != N_GROUPS or any(x >= y for x, y in zip(refs, refs[1:])):
                raise ConfigError(f"{name} must be {N_GROUPS} strictly increasing values, got {refs}")

    def refs(self, target: str) -> tuple[float, ...]:
        return self.sbp_refs if target.upper() == "SBP" else self.dbp_refs

    @property
    def hidden_out(self) -> int:
        return self.hidden * (2 if self.bidirectional else 1)

    @property
    def feature_dim(self) -> int:
        return self.n_clips * self.hidden_out


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv1d(channels, channels, 3, stride=1, padding=1)
        self.conv2 = nn.Conv1d(channels, channels, 3, stride=1, padding=1)

    def forward(self, x):
        return F_.relu(x + self.conv2(F_.relu(self.conv1(x))))


class ClipBackbone(nn.Module):
    """Residual 1-D CNN over a clip; ROI-channel features are the input channels."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        layers: list[nn.Module] = [nn.Conv1d(N_FEATURES, cfg.channels[0], 3, padding=1), nn.ReLU()]
        prev = cfg.channels[0]
        for i, (ch, nb) in enumerate(zip(cfg.channels, cfg.blocks)):
            if i > 0:
                if cfg.pool > 1:
                    layers.append(nn.AvgPool1d(cfg.pool, ceil_mode=True))
                layers += [nn.Conv1d(prev, ch, 3, padding=1), nn.ReLU()]
            layers += [ResidualBlock(ch) for _ in range(nb)]
            prev = ch
        self.body = nn.Sequential(*layers)
        self.out_dim = prev
        self.input_gain = cfg.input_gain
        self.center = cfg.center_clips

    def forward(self, clips):
        # clips: (N, L, 12) -> (N, out_dim)
        x = clips.transpose(1, 2)
        if self.center:
            x = x - x.mean(dim=2, keepdim=True)
        x = self.body(x * self.input_gain)
        return x.mean(dim=2)


@dataclass
class EstimatorOutput:
    class_logits: np.ndarray
    class_probs: np.ndarray
    reg_value: float
    fused: float

    @property
    def group(self) -> int:
        return int(np.argmax(self.class_probs)) + 1


class Estimator(nn.Module):
    def __init__(self, cfg: ModelConfig, target: str = "SBP"):
        super().__init__()
        self.cfg = cfg
        self.target = target.upper()
        self.backbone = ClipBackbone(cfg)
        self.rnn = nn.LSTM(self.backbone.out_dim, cfg.hidden, batch_first=True, bidirectional=cfg.bidirectional)
        self.classifier = nn.Linear(cfg.feature_dim, N_GROUPS)
        self.reg_hidden = nn.Linear(cfg.feature_dim + N_GROUPS, cfg.reg_hidden)
        self.reg_out = nn.Linear(cfg.reg_hidden, 1)
        with torch.no_grad():
            self.reg_out.bias.fill_(float(np.mean(cfg.refs(self.target))))
        self.register_buffer("refs", torch.tensor(cfg.refs(self.target), dtype=torch.float32))

    def check_input(self, clips):
        want = (self.cfg.n_clips, self.cfg.clip_length, N_FEATURES)
        if clips.dim() != 4 or tuple(clips.shape[1:]) != want:
            raise ConfigError(f"expected clips of shape (B, {want[0]}, {want[1]}, {want[2]}), got {tuple(clips.shape)}")

    def embed_clips(self, clips):
        """Shared-weight backbone on every clip: (B, M, L, 12) -> (B, M, E)."""
        self.check_input(clips)
        B, M = clips.shape[:2]
        return self.backbone(clips.reshape(B * M, *clips.shape[2:])).reshape(B, M, -1)

    def feature_extract(self, clips):
        out, _ = self.rnn(self.embed_clips(clips))
        return out.reshape(out.shape[0], -1)

    def classify(self, feats):
        return self.classifier(feats)

    def regress(self, feats, class_logits):
        h = F_.relu(self.reg_hidden(torch.cat([feats, class_logits], dim=1)))
        return self.reg_out(h).squeeze(1)

    def forward(self, clips):
        feats = self.feature_extract(clips)
        logits = self.classify(feats)
        return logits, self.regress(feats, logits)

    @torch.no_grad()
    def predict(self, clips) -> list[EstimatorOutput]:
        logits, reg = self(clips)
        probs = torch.softmax(logits.double(), dim=1)
        fused = fuse(probs, reg.double(), self.refs.double(), self.cfg.alpha, self.cfg.beta)
        return [
            EstimatorOutput(lg.double().numpy(), p.numpy(), float(r), float(fz))
            for lg, p, r, fz in zip(logits, probs, reg, fused)
        ]


def softmax(logits):
    return torch.softmax(logits, dim=-1)


def fuse(class_probs, reg_value, refs, alpha: float, beta: float):
    """alpha * refs[argmax(class_probs)] + beta * reg_value, elementwise over the batch."""
    probs = torch.as_tensor(class_probs)
    refs = torch.as_tensor(refs, dtype=probs.dtype)
    return alpha * refs[probs.argmax(dim=-1)] + beta * torch.as_tensor(reg_value, dtype=probs.dtype)


def group_labels(truths, bounds) -> torch.Tensor:
    """0-based interval labels for a batch of BP values."""
    return torch.tensor([assign_group(float(v), bounds) - 1 for v in truths], dtype=torch.long)


def loss_terms(class_logits, reg_value, truth, labels):
    """(cross-entropy, mean absolute error), both batch means."""
    ce = F_.cross_entropy(class_logits, labels)
    mae = (reg_value - truth).abs().mean()
    return ce, mae


def loss(class_logits, reg_value, truth, labels):
    ce, mae = loss_terms(class_logits, reg_value, truth, labels)
    return ce + mae


def build_model(cfg: ModelConfig, target: str, seed: int) -> Estimator:
    torch.manual_seed(seed)
    return Estimator(cfg, target)


@dataclass
class OptimConfig:
    optimizer: str = "sgd"
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")


def make_optimizer(model: nn.Module, cfg: OptimConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "adam":
        return torch.optim.Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    return torch.optim.SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)


@dataclass
class StepResult:
    loss: float
    ce: float
    mae: float
    extra: dict = field(default_factory=dict)


def train_step(model: Estimator, optimizer: torch.optim.Optimizer, clips, truth, labels) -> StepResult:
    model.train()
    optimizer.zero_grad()
    logits, reg = model(clips)
    ce, mae = loss_terms(logits, reg, truth, labels)
    total = ce + mae
    if not torch.isfinite(total):
        raise NumericalError(f"non-finite loss (ce={ce.item()}, mae={mae.item()})")
    total.backward()
    optimizer.step()
    return StepResult(float(total.detach()), float(ce.detach()), float(mae.detach()))
