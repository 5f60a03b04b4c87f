"""Deterministic stand-in for the full-wave solver.

A pattern is summarized by three statistics of its metal layout (fill, edge
density, radial moment); these set the centers, widths and depths of three
Lorentzian dips in a reflection spectrum sampled at 100 points over 20-35 GHz.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .pattern import GRID, is_ternary

N_FREQ = 100
FREQS = 20.0 + 15.0 * np.arange(N_FREQ) / (N_FREQ - 1)


@dataclass(frozen=True)
class PatternFeatures:
    fill: float
    edges: float
    radial: float


def _radius_map(n: int) -> np.ndarray:
    c = (np.arange(n) + 0.5) - n / 2
    return np.sqrt(c[:, None] ** 2 + c[None, :] ** 2) / (n / 2 * np.sqrt(2))


def _check(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim not in (2, 3) or p.shape[-1] != p.shape[-2]:
        raise ValidationError(f"expected square pattern(s), got shape {p.shape}")
    if not is_ternary(p):
        raise ValidationError("pattern has non-ternary entries")
    return p


def features_batch(p) -> np.ndarray:
    """[..., n, n] patterns -> [..., 3] array of (fill, edges, radial)."""
    p = _check(p)
    n = p.shape[-1]
    metal = 1.0 - p
    fill = metal.mean(axis=(-2, -1))
    diffs = (p[..., 1:, :] != p[..., :-1, :]).sum(axis=(-2, -1)) + \
            (p[..., :, 1:] != p[..., :, :-1]).sum(axis=(-2, -1))
    edges = diffs / (2.0 * n * (n - 1))
    mass = metal.sum(axis=(-2, -1))
    moment = (metal * _radius_map(n)).sum(axis=(-2, -1))
    radial = np.where(mass > 0, moment / np.maximum(mass, 1e-9), 0.0)
    return np.stack([fill, edges, radial], axis=-1)


def features(p) -> PatternFeatures:
    f, e, c = features_batch(p)
    return PatternFeatures(float(f), float(e), float(c))


def response_from_features(feats) -> np.ndarray:
    feats = np.asarray(feats, dtype=np.float64)
    f, e, c = feats[..., 0:1], feats[..., 1:2], feats[..., 2:3]
    centers = (22.0 + 10.0 * f, 25.0 + 8.0 * e, 28.0 + 6.0 * c)
    widths = (0.4 + 1.2 * e, 0.6 + 1.0 * c, 0.5 + 0.8 * f)
    amps = (f, 0.7 * f, 0.5 * f)
    dip = 0.0
    for f0, g, a in zip(centers, widths, amps):
        dip = dip + a * g * g / ((FREQS - f0) ** 2 + g * g)
    return np.clip(1.0 - 2.0 * dip, -1.0, 1.0)


def simulate(p) -> np.ndarray:
    """Pattern [32, 32] (or a batch [N, 32, 32]) -> response(s) of 100 values in [-1, 1]."""
    p = _check(p)
    if p.shape[-1] != GRID:
        raise ValidationError(f"the oracle is defined on {GRID}x{GRID} patterns")
    return response_from_features(features_batch(p))
