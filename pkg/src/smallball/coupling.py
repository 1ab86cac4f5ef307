"""Dimension reduction: couple any H-valued martingale to a planar one.

Given a source path N_0, N_1, ... in dimension d, the coupled shadow
M_0, M_1, ... lives in the plane and preserves both the point norms
|M_t| = |N_t| and the increment norms |M_{t+1} - M_t| = |N_{t+1} - N_t|.
Each step solves for a planar point x with

    |x| = |N_{n+1}|   and   <M_n, x> = <N_n, N_{n+1}>,

which is a circle-line intersection with (at most) two solutions; a fair
coin picks one, which is exactly what keeps the shadow a martingale.

Degenerate branches:

* proportional (circle tangent to the line): the unique solution is
  returned, rescaled onto the circle so norm preservation stays exact;
* shadow at the origin with a nonzero target norm: the two symmetric
  points +/- |N_{n+1}| e1 are used.

The solver is written over column batches; a single step is a batch of
width one, so scalar and Monte Carlo use share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import rng
from .errors import CauchySchwarzViolationError, NormMismatchError
from .martingale import PathSample

__all__ = [
    "CoupledPair",
    "couple_step",
    "couple_step_candidates",
    "couple_path",
    "couple_replicas",
    "MidpointResiduals",
]

NORM_TOL = 1e-9
CS_TOL = 1e-9
RADICAND_CLAMP = 1e-9
PROPORTIONAL_REL = 1e-12


@dataclass(frozen=True, eq=False)
class CoupledPair:
    """A source path and its planar shadow."""

    source: PathSample
    shadow: np.ndarray  # (n+1, 2)
    seed: object

    def max_norm_deviation(self) -> float:
        src = np.linalg.norm(self.source.points, axis=1)
        shd = np.linalg.norm(self.shadow, axis=1)
        return float(np.max(np.abs(src - shd))) if src.size else 0.0

    def max_increment_deviation(self) -> float:
        src = np.linalg.norm(np.diff(self.source.points, axis=0), axis=1)
        shd = np.linalg.norm(np.diff(self.shadow, axis=0), axis=1)
        return float(np.max(np.abs(src - shd))) if src.size else 0.0


def _solve_columns(
    m: np.ndarray,
    norm_n: np.ndarray,
    norm_next: np.ndarray,
    inner: np.ndarray,
    coins: np.ndarray,
    *,
    check: bool = True,
) -> np.ndarray:
    """Solve the coupling step for every column; m has shape (2, B)."""
    m0, m1 = m[0], m[1]
    r = np.hypot(m0, m1)
    if check:
        bad = np.abs(r - norm_n) > NORM_TOL
        if bad.any():
            i = int(np.argmax(bad))
            raise NormMismatchError(
                f"|M_n| = {r[i]} does not match claimed source norm {norm_n[i]}"
            )
        bad = np.abs(inner) > norm_n * norm_next + CS_TOL
        if bad.any():
            i = int(np.argmax(bad))
            raise CauchySchwarzViolationError(
                f"|<N_n, N_n+1>| = {abs(inner[i])} exceeds {norm_n[i]} * {norm_next[i]}"
            )

    origin = r == 0.0
    safe_r = np.where(origin, 1.0, r)
    mhat0 = m0 / safe_r
    mhat1 = m1 / safe_r
    a = inner / safe_r
    radicand = norm_next * norm_next - a * a
    if bool(np.any(radicand < -RADICAND_CLAMP)):
        i = int(np.argmax(radicand < -RADICAND_CLAMP))
        raise CauchySchwarzViolationError(
            f"radicand {radicand[i]} below clamp tolerance; corrupted inner product"
        )
    radicand = np.maximum(radicand, 0.0)
    proportional = radicand <= PROPORTIONAL_REL * norm_next * norm_next
    root = np.sqrt(radicand)
    sign = np.where(coins != 0, 1.0, -1.0)

    x0 = a * mhat0 - sign * root * mhat1
    x1 = a * mhat1 + sign * root * mhat0
    if proportional.any():
        scale = np.sign(a) * norm_next
        x0 = np.where(proportional, scale * mhat0, x0)
        x1 = np.where(proportional, scale * mhat1, x1)
    if origin.any():
        x0 = np.where(origin, sign * norm_next, x0)
        x1 = np.where(origin, 0.0, x1)
    return np.stack([x0, x1])


def couple_step(m_n, norm_nn: float, norm_nnext: float, inner: float, coin: int) -> np.ndarray:
    """One coupling step: the next shadow point given the source data.

    Raises norm-mismatch when |m_n| disagrees with the claimed source norm
    and cauchy-schwarz-violation when the inner product is infeasible.
    """
    m = np.asarray(m_n, dtype=np.float64).reshape(2, 1)
    out = _solve_columns(
        m,
        np.array([norm_nn], dtype=np.float64),
        np.array([norm_nnext], dtype=np.float64),
        np.array([inner], dtype=np.float64),
        np.array([1 if coin else 0]),
    )
    return out[:, 0]


def couple_step_candidates(m_n, norm_nnext: float, inner: float) -> tuple[np.ndarray, np.ndarray]:
    """Both circle-line intersection points (equal in the degenerate cases)."""
    m = np.asarray(m_n, dtype=np.float64).reshape(2, 1)
    nn = np.array([np.hypot(m[0, 0], m[1, 0])])
    heads = _solve_columns(m, nn, np.array([norm_nnext]), np.array([inner]), np.array([1]))
    tails = _solve_columns(m, nn, np.array([norm_nnext]), np.array([inner]), np.array([0]))
    return heads[:, 0], tails[:, 0]


def couple_path(source: PathSample, seed) -> CoupledPair:
    """Couple a full source path; deterministic given (source, seed).

    Norms and inner products are computed with the same reduction kernels as
    couple_replicas, so the scalar and batched paths agree bit for bit.
    """
    pts = source.points
    n = source.n
    coins = rng.coin_bits(seed, n)
    norms = np.sqrt(np.einsum("td,td->t", pts, pts))
    inners = np.einsum("td,td->t", pts[:-1], pts[1:]) if n else np.zeros(0)
    shadow = np.empty((n + 1, 2))
    shadow[0] = (norms[0], 0.0)
    m = shadow[0].reshape(2, 1).copy()
    for t in range(n):
        m = _solve_columns(
            m,
            norms[t : t + 1],
            norms[t + 1 : t + 2],
            inners[t : t + 1],
            coins[t : t + 1],
        )
        shadow[t + 1] = m[:, 0]
    return CoupledPair(source=source, shadow=shadow, seed=seed)


class MidpointResiduals(NamedTuple):
    """Max residuals of the two defining identities over generic steps."""

    midpoint_perp: float   # |<x1 + x2, unit perp of M_n>| / 2
    inner_match: float     # max_i |<x_i, M_n> - inner|
    generic_steps: int


def couple_replicas(
    points: np.ndarray,
    coins: np.ndarray,
    *,
    collect_residuals: bool = False,
) -> tuple[np.ndarray, Optional[MidpointResiduals]]:
    """Couple B source paths at once.

    points has shape (n+1, dim, B) (the batch layout produced by
    martingale.simulate_batch with collect_points=True) and coins has shape
    (B, n) with one fair bit per replica per step.  Returns the shadows with
    shape (n+1, 2, B).  With collect_residuals, also verifies the candidate
    midpoint identities at every generic step and returns the worst residuals.
    """
    n = points.shape[0] - 1
    B = points.shape[2]
    if coins.shape != (B, n):
        raise ValueError(f"coins must have shape ({B}, {n})")
    coins_t = np.ascontiguousarray(coins.T)
    shadows = np.empty((n + 1, 2, B))
    norms_prev = np.sqrt(np.einsum("db,db->b", points[0], points[0]))
    shadows[0, 0] = norms_prev
    shadows[0, 1] = 0.0
    worst_mid = 0.0
    worst_inner = 0.0
    generic_total = 0
    for t in range(n):
        src_now = points[t]
        src_next = points[t + 1]
        norms_next = np.sqrt(np.einsum("db,db->b", src_next, src_next))
        inner = np.einsum("db,db->b", src_now, src_next)
        m = shadows[t]
        shadows[t + 1] = _solve_columns(m, norms_prev, norms_next, inner, coins_t[t])
        if collect_residuals:
            heads = _solve_columns(m, norms_prev, norms_next, inner,
                                   np.ones(B, dtype=np.uint8), check=False)
            tails = _solve_columns(m, norms_prev, norms_next, inner,
                                   np.zeros(B, dtype=np.uint8), check=False)
            r = np.hypot(m[0], m[1])
            origin = r == 0.0
            safe_r = np.where(origin, 1.0, r)
            a = inner / safe_r
            radicand = np.maximum(norms_next**2 - a**2, 0.0)
            generic = (~origin) & (radicand > PROPORTIONAL_REL * norms_next**2)
            if generic.any():
                mhat0 = m[0] / safe_r
                mhat1 = m[1] / safe_r
                mid0 = heads[0] + tails[0]
                mid1 = heads[1] + tails[1]
                perp_dot = 0.5 * np.abs(mid0 * (-mhat1) + mid1 * mhat0)
                inner_dev = np.maximum(
                    np.abs(heads[0] * m[0] + heads[1] * m[1] - inner),
                    np.abs(tails[0] * m[0] + tails[1] * m[1] - inner),
                )
                worst_mid = max(worst_mid, float(np.max(perp_dot[generic])))
                worst_inner = max(worst_inner, float(np.max(inner_dev[generic])))
                generic_total += int(np.count_nonzero(generic))
        norms_prev = norms_next
    residuals = (
        MidpointResiduals(worst_mid, worst_inner, generic_total)
        if collect_residuals
        else None
    )
    return shadows, residuals
