"""Ternary metasurface patterns: validation, rounding, symmetrization, sampling.

Codes: 1 = air, 0 = square metal, 0.5 = triangular metal. A full pattern is
``2n x 2n`` and is built from an ``n x n`` quadrant by transpose-symmetrizing
and mirroring, which makes it invariant under 90 degree rotation.
"""
from __future__ import annotations

import numpy as np

from .errors import ValidationError

GRID = 32
QUAD = GRID // 2
CODES = (0.0, 0.5, 1.0)
CELL_PITCH_MM = 5.4 / GRID

_TEXT = {0.0: "0", 0.5: "t", 1.0: "1"}
_FROM_TEXT = {v: k for k, v in _TEXT.items()}


def is_ternary(x) -> bool:
    x = np.asarray(x)
    return bool(np.all((x == 0.0) | (x == 0.5) | (x == 1.0)))


def round_ternary(x) -> np.ndarray:
    """Round entries of [0, 1] to the nearest of {0, 0.5, 1}; ties (0.25, 0.75) go up."""
    x = np.asarray(x)
    if x.size and not np.all((x >= 0.0) & (x <= 1.0)):
        raise ValidationError("round_ternary expects entries in [0, 1]")
    return (np.floor(2.0 * x + 0.5) / 2.0).astype(x.dtype if x.dtype.kind == "f" else np.float64)


def symmetrize_quadrant(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return round_ternary((q + q.swapaxes(-1, -2)) / 2.0)


def mirror(q) -> np.ndarray:
    """Tile a (batched) quadrant into four mirrored copies."""
    q = np.asarray(q)
    top = np.concatenate([q, np.flip(q, -1)], axis=-1)
    return np.concatenate([top, np.flip(top, -2)], axis=-2)


def assemble_full(q) -> np.ndarray:
    """Quadrant (or batch of quadrants) -> full rot90-symmetric pattern(s)."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim < 2 or q.shape[-1] != q.shape[-2]:
        raise ValidationError(f"quadrant must be square, got shape {q.shape}")
    if not is_ternary(q):
        raise ValidationError("quadrant has non-ternary entries")
    return mirror(symmetrize_quadrant(q))


def extract_quadrant(p) -> np.ndarray:
    p = np.asarray(p)
    n = p.shape[-1] // 2
    return p[..., :n, :n].copy()


def is_rot90_invariant(p) -> bool:
    p = np.asarray(p)
    return bool(np.array_equal(p, np.rot90(p, axes=(-2, -1))))


def validate_pattern(p, size: int | None = GRID) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1] or (size is not None and p.shape[0] != size):
        raise ValidationError(f"pattern must be {size}x{size}, got shape {p.shape}")
    if not is_ternary(p):
        raise ValidationError("pattern has non-ternary entries")
    if not is_rot90_invariant(p):
        raise ValidationError("pattern is not invariant under 90 degree rotation")
    return p


def random_quadrant(rng: np.random.Generator, n: int = QUAD, batch: int | None = None) -> np.ndarray:
    """I.i.d. uniform codes over {0, 0.5, 1}."""
    shape = (n, n) if batch is None else (batch, n, n)
    return rng.integers(0, 3, size=shape) / 2.0


def random_pattern(seed, n: int = QUAD) -> np.ndarray:
    return assemble_full(random_quadrant(np.random.default_rng(seed), n))


def to_text(p) -> str:
    p = np.asarray(p)
    return "\n".join("".join(_TEXT[float(v)] for v in row) for row in p)


def from_text(text: str) -> np.ndarray:
    rows = [line.strip() for line in text.strip().splitlines() if line.strip()]
    try:
        return np.array([[_FROM_TEXT[ch] for ch in row] for row in rows], dtype=np.float64)
    except KeyError as exc:
        raise ValidationError(f"unknown pattern character {exc.args[0]!r}") from None
