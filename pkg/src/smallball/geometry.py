"""Small vector helpers shared by the simulation and coupling code."""

from __future__ import annotations

import numpy as np

from .errors import InvalidSpecError

UNIT_TOL = 1e-12


def as_vector(coords, dim: int | None = None) -> np.ndarray:
    """Validate and return a finite 1-D float64 vector."""
    v = np.asarray(coords, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1 or v.size < 1:
        raise InvalidSpecError(f"expected a 1-D vector, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise InvalidSpecError(f"expected dimension {dim}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise InvalidSpecError("vector has non-finite coordinates")
    return v


def norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(v))


def is_unit(v: np.ndarray, tol: float = UNIT_TOL) -> bool:
    return abs(norm(v) - 1.0) <= tol


def rot90_first_two(v: np.ndarray) -> np.ndarray:
    """Rotate by +90 degrees in the plane of the first two coordinates.

    Coordinates beyond the first two are zeroed, so the result is always
    orthogonal to the input.
    """
    out = np.zeros_like(v)
    out[0] = -v[1]
    out[1] = v[0]
    return out
