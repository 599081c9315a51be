"""Run configuration: one JSON file, every field overridable from the CLI.

Defaults follow the reference training recipe: 1000 diffusion steps, DDIM-50
with eta 0, cosine schedule, guidance 3.5 with 10% condition dropout, AdamW
at lr 1e-4 / weight decay 2e-5, state size 16, two stacked blocks (one for
the ultralight variant).
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .core import ConfigError
from .blocks import DenoiserConfig
from .diffusion import GuidanceConfig
from .motion import LossWeights


@dataclass
class ScheduleConfig:
    timesteps: int = 1000
    ddim_steps: int = 50
    s: float = 0.008
    eta: float = 0.0


@dataclass
class OptimConfig:
    lr: float = 1e-4
    weight_decay: float = 2e-5
    batch_size: int = 8
    epochs: int = 50
    checkpoint_interval: int = 25
    lr_decay: str = "none"  # "none" | "linear" (to zero over the run)
    t_sampling: str = "uniform"  # "uniform" | "late" (quadratic bias to high t)
    grad_clip: float = 0.0  # global-norm clip; 0 disables
    swap_augment: bool = False  # randomly exchange the two persons per row


@dataclass
class DataConfig:
    seed: int = 0
    n_sequences: int = 8
    seq_len: int = 32
    joints: int = 5
    n_labels: int = 3
    fps: float = 20.0


@dataclass
class ModelSection:
    n_blocks: int = 2
    d_model: int = 64
    n_state: int = 16
    cond_dim: int = 64


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    train_seed: int = 1
    init_seed: int = 2
    out_dir: str = "runs/default"

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(
            n_blocks=self.model.n_blocks,
            d_model=self.model.d_model,
            n_state=self.model.n_state,
            joints=self.data.joints,
            cond_dim=self.model.cond_dim,
            seq_len=self.data.seq_len,
            n_labels=self.data.n_labels,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def resolved_out_dir(self) -> str:
        """Relative output dirs live under $DUETMAMBA_OUT when that is set."""
        root = os.environ.get("DUETMAMBA_OUT", "")
        if root and not os.path.isabs(self.out_dir):
            return os.path.join(root, self.out_dir)
        return self.out_dir


_SECTIONS = {
    "model": ModelSection,
    "schedule": ScheduleConfig,
    "guidance": GuidanceConfig,
    "optim": OptimConfig,
    "data": DataConfig,
    "loss": LossWeights,
}


def config_from_dict(d: dict) -> RunConfig:
    cfg = RunConfig()
    for key, value in d.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            section = _SECTIONS[key]()
            for k, v in value.items():
                if not hasattr(section, k):
                    raise ConfigError(f"unknown field {key}.{k}")
                setattr(section, k, type(getattr(section, k))(v))
            setattr(cfg, key, section)
        elif hasattr(cfg, key):
            setattr(cfg, key, type(getattr(cfg, key))(value))
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return cfg


def load_config(path: str, overrides=()) -> RunConfig:
    with open(path) as f:
        d = json.load(f)
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override must be key=value, got {ov!r}")
        key, raw = ov.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = d
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return config_from_dict(d)


def save_config(cfg: RunConfig, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
