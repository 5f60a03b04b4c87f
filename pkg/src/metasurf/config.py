"""Flat, JSON-serializable run configuration shared by all commands."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .sa import SaConfig
from .sinkhorn import SinkhornConfig
from .xgan import GeneratorConfig, Labels, XganTrainConfig


@dataclass
class TrainConfig:
    # seeds
    data_seed: int = 0
    surrogate_seed: int = 0
    gan_seed: int = 0
    sa_seed: int = 0
    # data
    samples: int = 5000
    split: float = 0.9
    # optimizers (shared)
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    # surrogate
    surrogate_batch: int = 64
    surrogate_epochs: int = 30
    # inverse model
    gan_batch: int = 64
    gan_steps: int = 2000
    lam: float = 1.0
    gamma: float = 10.0
    n_critic: int = 6
    noise_dim: int = 10
    real_label: float = -1.0
    fake_label: float = 1.0
    generator_label: float = 1.0
    sinkhorn_epsilon: float = 0.1
    sinkhorn_iters: int = 100
    # design loop
    tau: float = 0.1
    max_attempts: int = 64
    eval_targets: int = 100
    # annealing baseline
    sa_T0: float = 1.0
    sa_alpha: float = 0.95
    sa_cool_every: int = 50
    sa_T_min: float = 1e-3
    sa_moves: int = 5000

    def __post_init__(self):
        if not 0 < self.split < 1:
            raise ConfigError("split must lie in (0, 1)")
        for name in ("samples", "surrogate_batch", "surrogate_epochs", "gan_batch", "gan_steps",
                     "n_critic", "noise_dim", "max_attempts", "eval_targets", "sinkhorn_iters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        self.sa_config()
        self.sinkhorn_config()

    def with_seed(self, seed: int) -> "TrainConfig":
        return dataclasses.replace(self, data_seed=seed, surrogate_seed=seed, gan_seed=seed, sa_seed=seed)

    def sinkhorn_config(self) -> SinkhornConfig:
        return SinkhornConfig(epsilon=self.sinkhorn_epsilon, max_iters=self.sinkhorn_iters)

    def sa_config(self) -> SaConfig:
        return SaConfig(T0=self.sa_T0, alpha=self.sa_alpha, cool_every=self.sa_cool_every,
                        T_min=self.sa_T_min, max_moves=self.sa_moves, seed=self.sa_seed)

    def xgan_config(self) -> XganTrainConfig:
        return XganTrainConfig(
            lam=self.lam, gamma=self.gamma, n_critic=self.n_critic, batch=self.gan_batch,
            steps=self.gan_steps, lr=self.lr, beta1=self.beta1, beta2=self.beta2, seed=self.gan_seed,
            sinkhorn=self.sinkhorn_config(),
            labels=Labels(self.real_label, self.fake_label, self.generator_label),
            generator=GeneratorConfig(noise_dim=self.noise_dim))

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")
