"""Model-fitting metrics over a set of m designs: MAE_ave, ACC_ave, ACC_min, R^2."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class DesignEval:
    target: np.ndarray
    achieved: np.ndarray
    mae: float
    mse: float
    var: float


def evaluate_design(target, achieved) -> DesignEval:
    t = np.asarray(target, dtype=np.float64)
    a = np.asarray(achieved, dtype=np.float64)
    if t.shape != a.shape:
        raise ContractError(f"target {t.shape} and achieved {a.shape} differ")
    err = a - t
    return DesignEval(t, a, float(np.abs(err).mean()), float((err ** 2).mean()), float(t.var()))


def evaluate_designs(targets, achieved) -> list[DesignEval]:
    targets, achieved = np.atleast_2d(targets), np.atleast_2d(achieved)
    if len(targets) != len(achieved):
        raise ContractError(f"{len(achieved)} designs for {len(targets)} targets")
    return [evaluate_design(t, a) for t, a in zip(targets, achieved)]


def _maes(evals) -> np.ndarray:
    if len(evals) == 0:
        raise ContractError("no designs to evaluate")
    return np.array([e.mae if isinstance(e, DesignEval) else float(e) for e in evals])


def mae_ave(evals) -> float:
    """Mean of per-design MAEs. Accepts DesignEval records or bare MAE values."""
    return float(_maes(evals).mean())


def acc_ave(mae: float) -> float:
    if not 0.0 <= mae <= 2.0:
        raise ContractError(f"MAE_ave {mae} outside [0, 2]")
    return 1.0 - mae / 2.0


def acc_min(evals) -> float:
    return 1.0 - float(_maes(evals).max()) / 2.0


def r2(evals, mode: str = "mean") -> tuple[float, int]:
    """1 - sum(MSE/Var), or its average over designs in ``mode="mean"``.

    Designs with constant targets (Var = 0) are skipped; returns (value, skipped).
    """
    if mode not in ("mean", "paper_literal"):
        raise ContractError(f"unknown R^2 mode {mode!r}")
    if len(evals) == 0:
        raise ContractError("no designs to evaluate")
    ratios = [e.mse / e.var for e in evals if e.var > 0]
    skipped = len(evals) - len(ratios)
    if not ratios:
        return float("nan"), skipped
    total = float(np.sum(ratios))
    return (1.0 - total / len(ratios) if mode == "mean" else 1.0 - total), skipped


@dataclass(frozen=True)
class MetricsReport:
    mae_ave: float
    acc_ave: float
    acc_min: float
    r2_ave: float
    r2_paper_literal: float
    m: int
    skipped_zero_var: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def report(evals) -> MetricsReport:
    mae = mae_ave(evals)
    r2_mean, skipped = r2(evals, "mean")
    r2_lit, _ = r2(evals, "paper_literal")
    return MetricsReport(mae, acc_ave(mae), acc_min(evals), r2_mean, r2_lit, len(evals), skipped)
