"""End-to-end desk experiment: data, surrogate, generator, and the three inverse designers.

Every designer is scored by the oracle on the same held-out targets, so their
metric reports are directly comparable.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .data import Dataset, generate_dataset
from .metrics import MetricsReport, evaluate_designs, report
from .oracle import simulate
from .pattern import random_pattern
from .sa import SaResult, sa_design_many
from .surrogate import FResNet, SurrogateTrainReport, train_surrogate
from .xgan import DesignResult, Generator, XganReport, design_many, train_xgan

log = logging.getLogger(__name__)


@dataclass
class SurrogateStage:
    model: FResNet
    report: SurrogateTrainReport
    seconds: float


@dataclass
class GeneratorStage:
    model: Generator
    report: XganReport
    seconds: float


@dataclass
class InverseComparison:
    targets: np.ndarray
    xgan: list[DesignResult]
    random: np.ndarray
    sa: list[SaResult]
    reports: dict[str, MetricsReport] = field(default_factory=dict)
    sa_seconds_per_design: float = 0.0
    generator_seconds_per_sample: float = 0.0

    @property
    def speed_ratio(self) -> float:
        return self.sa_seconds_per_design / self.generator_seconds_per_sample


def split_data(cfg: TrainConfig) -> tuple[Dataset, Dataset]:
    return generate_dataset(cfg.samples, cfg.data_seed).split(cfg.split)


def fit_surrogate(cfg: TrainConfig, train: Dataset, test: Dataset) -> SurrogateStage:
    t0 = time.perf_counter()
    model, rep = train_surrogate(train.patterns, train.responses, test.patterns, test.responses,
                                 epochs=cfg.surrogate_epochs, batch=cfg.surrogate_batch, lr=cfg.lr,
                                 betas=(cfg.beta1, cfg.beta2), seed=cfg.surrogate_seed)
    return SurrogateStage(model, rep, time.perf_counter() - t0)


def fit_generator(cfg: TrainConfig, train: Dataset, surrogate: FResNet) -> GeneratorStage:
    t0 = time.perf_counter()
    G, _, rep = train_xgan(train.patterns, train.responses, surrogate, cfg.xgan_config())
    return GeneratorStage(G, rep, time.perf_counter() - t0)


def random_best_of(targets, k: int, seed: int) -> np.ndarray:
    """Per target, the oracle-best of ``k`` random patterns (pattern seeds seed + i*k + j)."""
    out = []
    for i, t in enumerate(targets):
        pats = np.stack([random_pattern(seed + i * k + j) for j in range(k)])
        out.append(pats[np.argmin(np.abs(simulate(pats) - t).mean(axis=1))])
    return np.stack(out)


def time_generator(G: Generator, targets, noise_dim: int, repeats: int = 3) -> float:
    """Wall-clock seconds per generated pattern, best of ``repeats`` batched passes."""
    z = np.random.default_rng(0).standard_normal((len(targets), noise_dim))
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        G.sample(targets, z)
        best = min(best, time.perf_counter() - t0)
    return best / len(targets)


def compare_inverse(cfg: TrainConfig, test: Dataset, surrogate: FResNet, G: Generator,
                    best_of: int = 16) -> InverseComparison:
    targets = test.responses[:cfg.eval_targets].astype(np.float64)
    xg = design_many(targets, G, tau=0.0, max_attempts=best_of, seed=cfg.gan_seed)
    rnd = random_best_of(targets, best_of, seed=10_000 + cfg.data_seed)
    sa = sa_design_many(targets, surrogate, cfg.sa_config())
    designs = {"xgan": np.stack([r.pattern for r in xg]), "random": rnd,
               "sa": np.stack([r.pattern for r in sa])}
    reports = {name: report(evaluate_designs(targets, simulate(p))) for name, p in designs.items()}
    out = InverseComparison(targets, xg, rnd, sa, reports)
    out.sa_seconds_per_design = sa[0].seconds
    out.generator_seconds_per_sample = time_generator(G, targets, cfg.noise_dim)
    for name, rep in reports.items():
        log.info("%s oracle MAE_ave %.5f ACC_ave %.5f", name, rep.mae_ave, rep.acc_ave)
    return out

