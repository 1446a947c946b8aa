"""Run configuration as flat ``section.key=value`` text.

Every dataclass field of every section is serialized, sorted, one per line,
so a config file doubles as a reproducibility record. Tuples are written
comma-separated; booleans as ``true``/``false``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import ConfigError
from .estimator import ModelConfig, OptimConfig
from .sampler import GroupBoundaries
from .stm import AugmentConfig
from .synthetic import SynthSpec

TARGETS = ("SBP", "DBP")


@dataclass
class TrainConfig:
    batch_size: int = 32
    steps: int = 1500
    folds: int = 5
    oversample: bool = True
    augment: bool = True
    optimizer: str = "adam"
    lr: float = 3e-3
    momentum: float = 0.9
    weight_decay: float = 0.0
    log_every: int = 50

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 0 or self.log_every < 1:
            raise ConfigError("batch_size and log_every must be >= 1, steps >= 0")
        if self.oversample and self.batch_size % 4:
            raise ConfigError(f"batch_size must be divisible by 4 with oversampling, got {self.batch_size}")
        if self.folds < 2:
            raise ConfigError(f"k must be >= 2, got folds={self.folds}")
        self.optim()

    def optim(self) -> OptimConfig:
        return OptimConfig(self.optimizer, self.lr, self.momentum, self.weight_decay)


SECTIONS = {
    "augment": AugmentConfig,
    "model": ModelConfig,
    "groups": GroupBoundaries,
    "train": TrainConfig,
    "synth": SynthSpec,
}


@dataclass
class RunConfig:
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    groups: GroupBoundaries = field(default_factory=GroupBoundaries)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    seed: int = 0
    target: str = "both"

    def __post_init__(self):
        self.target = str(self.target)
        if self.target.upper() not in TARGETS + ("BOTH",):
            raise ConfigError(f"target must be SBP, DBP or both, got {self.target!r}")

    @property
    def targets(self) -> tuple[str, ...]:
        t = self.target.upper()
        return TARGETS if t == "BOTH" else (t,)

    def to_text(self) -> str:
        lines = [f"run.seed={self.seed}", f"run.target={self.target}"]
        for name in SECTIONS:
            obj = getattr(self, name)
            for f in dataclasses.fields(obj):
                lines.append(f"{name}.{f.name}={_format(getattr(obj, f.name))}")
        return "\n".join(sorted(lines)) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            elem = type(default[0]) if default else float
            return tuple(elem(x) for x in raw.split(",") if x.strip()) if raw else ()
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def apply_overrides(cfg: RunConfig, items: Iterable[str]) -> RunConfig:
    """Return a new config with ``section.key=value`` items applied."""
    values: dict[str, dict] = {name: dataclasses.asdict(getattr(cfg, name)) for name in SECTIONS}
    # asdict turns tuples into lists only for nested dataclasses; fields here are flat
    run = {"seed": cfg.seed, "target": cfg.target}
    for item in items:
        item = item.strip()
        if not item or item.startswith("#"):
            continue
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if "." not in key:
            raise ConfigError(f"config key needs a section prefix: {key!r}")
        section, name = key.split(".", 1)
        if section == "run":
            if name not in run:
                raise ConfigError(f"unknown config key {key!r}")
            run[name] = _parse(raw, run[name], key) if name == "seed" else raw.strip()
            continue
        if section not in SECTIONS or name not in values[section]:
            raise ConfigError(f"unknown config key {key!r}")
        values[section][name] = _parse(raw, getattr(getattr(cfg, section), name), key)
    kwargs = {name: SECTIONS[name](**values[name]) for name in SECTIONS}
    return RunConfig(**kwargs, seed=int(run["seed"]), target=run["target"])


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    return apply_overrides(base or RunConfig(), text.splitlines())


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, base)


PRESETS: dict[str, list[str]] = {
    # clip length 150, three clips of a 15 s / 30 fps video, biLSTM, equal fusion weights
    "default": [],
    # desk-scale overfitting/smoke preset; pure value-head output
    "tiny": [
        "model.channels=8,16",
        "model.blocks=1,1",
        "model.hidden=16",
        "model.reg_hidden=32",
        "model.alpha=0.0",
        "model.beta=1.0",
        "augment.mask_probability=0.0",
        "train.steps=600",
    ],
    "resnet18": [
        "model.channels=64,128,256,512",
        "model.blocks=2,2,2,2",
        "model.hidden=128",
        "model.reg_hidden=128",
    ],
}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return apply_overrides(RunConfig(), PRESETS[name])
