"""Entropic optimal transport between weighted point clouds (Sinkhorn scaling).

The adversarial losses compare each discriminator output vector, read as a
uniform cloud of scalars, with a Dirac at the label. With a single target point
the coupling is forced, so the transport cost is the mean squared deviation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, constant
from .errors import ConfigError, ContractError, NumericalError


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 0.1
    max_iters: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")


@dataclass
class PointCloud:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=np.float64)
        if len(pts) < 1:
            raise ContractError("a point cloud needs at least one point")
        if w.shape != (len(pts),) or np.any(w < 0) or abs(w.sum() - 1.0) >= 1e-9:
            raise ContractError("weights must be nonnegative, one per point, and sum to 1")
        self.points, self.weights = pts, w

    @classmethod
    def uniform(cls, points) -> "PointCloud":
        pts = np.asarray(points, dtype=np.float64)
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))


def cost_matrix(a: PointCloud, b: PointCloud) -> np.ndarray:
    """Squared Euclidean distances, shape [n, m]."""
    if a.points.shape[1] != b.points.shape[1]:
        raise ContractError(f"point dimensions differ: {a.points.shape[1]} vs {b.points.shape[1]}")
    d = a.points[:, None, :] - b.points[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def sinkhorn_plan(C: np.ndarray, wa: np.ndarray, wb: np.ndarray, cfg: SinkhornConfig) -> np.ndarray:
    """Regularized plan diag(u) K diag(v) for K = exp(-C / eps).

    Works on a leading batch axis too: C [..., n, m], wa [..., n], wb [..., m].
    Each row of C is shifted by its minimum before exponentiation; the shift
    is absorbed by the row scaling, so the plan is unchanged.
    """
    C = C - C.min(axis=-1, keepdims=True)
    K = np.exp(-C / cfg.epsilon)
    if np.any(K.sum(axis=-1) == 0) or np.any(K.sum(axis=-2) == 0):
        raise NumericalError(
            f"exp(-C/eps) underflowed to an all-zero row or column at eps={cfg.epsilon}; "
            "use a larger epsilon")
    v = np.ones_like(wb)
    for _ in range(cfg.max_iters):
        u = wa / np.einsum("...ij,...j->...i", K, v)
        v = wb / np.einsum("...ij,...i->...j", K, u)
        # after the v update columns are exact; rows carry the residual
        rows = u * np.einsum("...ij,...j->...i", K, v)
        if np.abs(rows - wa).sum(axis=-1).max() < cfg.tol:
            break
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise NumericalError("Sinkhorn scalings became non-finite; use a larger epsilon")
    return u[..., :, None] * K * v[..., None, :]


def sinkhorn_distance(a: PointCloud, b: PointCloud,
                      cfg: SinkhornConfig = SinkhornConfig()) -> tuple[float, np.ndarray]:
    """Transport cost <P, C> under the regularized plan (entropy term not included)."""
    C = cost_matrix(a, b)
    P = sinkhorn_plan(C, a.weights, b.weights, cfg)
    return max(float((P * C).sum()), 0.0), P


def sinkhorn_cost(x: Tensor, y, cfg: SinkhornConfig = SinkhornConfig()) -> Tensor:
    """Batched 1-D Sinkhorn cost between uniform clouds x [B, n] and y [B, m].

    Gradients flow through the cost matrix with the final plan held fixed.
    """
    y = y if isinstance(y, Tensor) else constant(y, dtype=x.dtype)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ContractError(f"expected [B, n] and [B, m] clouds, got {x.shape} and {y.shape}")
    diff = x.reshape(x.shape[0], x.shape[1], 1) - y.reshape(y.shape[0], 1, y.shape[1])
    C = diff * diff
    b, n = x.shape
    m = y.shape[1]
    P = sinkhorn_plan(C.data.astype(np.float64), np.full((b, n), 1.0 / n), np.full((b, m), 1.0 / m), cfg)
    return (C * constant(P, dtype=x.dtype)).sum(axis=(1, 2))


def sinkhorn_to_target(outputs: Tensor, target: float, cfg: SinkhornConfig = SinkhornConfig()) -> Tensor:
    """Batch mean of the transport cost from each output vector to the point ``target``."""
    if outputs.ndim != 2 or outputs.shape[0] < 1:
        raise ContractError(f"expected outputs of shape [batch, d], got {outputs.shape}")
    tgt = np.full((outputs.shape[0], 1), float(target))
    return sinkhorn_cost(outputs, tgt, cfg).mean()
