"""Simulated annealing over quadrant codes, scored by a surrogate (or any response model).

Several targets can be optimized in lockstep: every chain keeps its own RNG and
its own state, and only the objective evaluation is batched.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .oracle import simulate
from .pattern import CODES, QUAD, assemble_full, random_quadrant
from .surrogate import FResNet, predict


@dataclass(frozen=True)
class SaConfig:
    T0: float = 1.0
    alpha: float = 0.95
    cool_every: int = 50
    T_min: float = 1e-3
    max_moves: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not (self.T_min > 0 and self.T0 >= self.T_min):
            raise ConfigError("need T0 >= T_min > 0")
        if self.cool_every < 1 or self.max_moves < 0:
            raise ConfigError("cool_every must be positive and max_moves nonnegative")


@dataclass
class SaTrace:
    initial: float
    T: list[float] = field(default_factory=list)
    J: list[float] = field(default_factory=list)  # objective of the proposed state
    accepted: list[bool] = field(default_factory=list)
    current: list[float] = field(default_factory=list)  # objective of the state after the move
    best: list[float] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["move", "T", "J", "accepted", "bestJ"])
            for k, row in enumerate(zip(self.T, self.J, self.accepted, self.best)):
                w.writerow([k, repr(row[0]), repr(row[1]), int(row[2]), repr(row[3])])


@dataclass
class SaResult:
    pattern: np.ndarray
    objective: float
    trace: SaTrace
    seconds: float


def response_model(model):
    """Turn an FResNet or a callable into patterns [B, n, n] -> responses [B, 100]."""
    if isinstance(model, FResNet):
        return lambda p: predict(model, p, batch=max(len(p), 1))
    if callable(model):
        return model
    raise ContractError("objective model must be a surrogate or a callable")


def _objective(f, quads, targets) -> np.ndarray:
    return np.abs(np.asarray(f(assemble_full(quads)), dtype=np.float64) - targets).mean(axis=-1)


def sa_design_many(targets, model, cfg: SaConfig = SaConfig(), seeds=None) -> list[SaResult]:
    """One independent annealing chain per target; chain ``i`` uses seed ``cfg.seed + i``."""
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    m = len(targets)
    seeds = [cfg.seed + i for i in range(m)] if seeds is None else list(seeds)
    if len(seeds) != m:
        raise ContractError("one seed per target is required")
    f = response_model(model)
    rngs = [np.random.default_rng(s) for s in seeds]
    t0 = time.perf_counter()
    quads = np.stack([random_quadrant(r) for r in rngs])
    cur = _objective(f, quads, targets)
    best_q, best = quads.copy(), cur.copy()
    traces = [SaTrace(initial=float(j)) for j in cur]
    T = cfg.T0
    rows = np.arange(m)
    for move in range(cfg.max_moves):
        if move and move % cfg.cool_every == 0:
            T *= cfg.alpha
        if T < cfg.T_min:
            break
        cells = np.array([r.integers(0, QUAD, 2) for r in rngs])
        shifts = np.array([r.integers(1, 3) for r in rngs])
        u = np.array([r.random() for r in rngs])
        prop = quads.copy()
        old = np.rint(prop[rows, cells[:, 0], cells[:, 1]] * 2).astype(int)
        prop[rows, cells[:, 0], cells[:, 1]] = np.asarray(CODES)[(old + shifts) % 3]
        J = _objective(f, prop, targets)
        delta = J - cur
        with np.errstate(over="ignore"):
            accept = (delta <= 0) | (u < np.exp(-np.maximum(delta, 0.0) / T))
        quads[accept] = prop[accept]
        cur = np.where(accept, J, cur)
        better = cur < best
        best_q[better] = quads[better]
        best = np.where(better, cur, best)
        for i, tr in enumerate(traces):
            tr.T.append(T)
            tr.J.append(float(J[i]))
            tr.accepted.append(bool(accept[i]))
            tr.current.append(float(cur[i]))
            tr.best.append(float(best[i]))
    per_design = (time.perf_counter() - t0) / max(m, 1)
    pats = assemble_full(best_q)
    return [SaResult(pats[i], float(best[i]), traces[i], per_design) for i in range(m)]


def sa_design(c_target, model, cfg: SaConfig = SaConfig()) -> tuple[np.ndarray, SaTrace]:
    res = sa_design_many(np.asarray(c_target)[None], model, cfg)[0]
    return res.pattern, res.trace


def final_evaluate(pattern, c_target, oracle=simulate) -> float:
    """Oracle MAE of a finished design."""
    return float(np.abs(oracle(pattern) - np.asarray(c_target, dtype=np.float64)).mean())
