"""Closed-form bound evaluation: corridor, small-ball and radius-R bounds.

Everything here is a pure function of the parameters; nothing samples.  The
headline inequalities carry an unspecified universal constant, exposed as
``c_universal`` (default 1.0): certificates report the evaluated formula at
that constant together with a vacuousness flag instead of pretending the
constant is known.

The threshold index ``k0 = ceil(30 * L^24 * lambda^(8/5))`` is astronomically
large for L > 1, which makes the recursion for ``s_k`` and ``beta_k``
degenerate at desk scale (every factor collapses to the base case).  A
``k0_override`` lets small values exercise the recursion; certificates built
that way are flagged as off-theorem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import mpmath
import numpy as np

from .errors import (
    BoundOverflowError,
    DomainError,
    IndexOutOfRangeError,
    InvalidSpecError,
    RadiusOutOfRangeError,
)
from .martingale import PathSample, VarianceSchedule

__all__ = [
    "BoundParams",
    "BoundCertificate",
    "compute_k0",
    "compute_s",
    "compute_s_sequence",
    "compute_beta",
    "compute_beta_sequence",
    "corridor_bound",
    "smallball_bound",
    "largeball_bound",
    "azuma_tail",
    "MagnitudeBounds",
    "magnitude_bounds",
    "check_exp_approx",
    "corridor_indicator",
    "build_certificate",
]

MAX_K0 = 2**63 - 1


@dataclass(frozen=True, eq=False)
class BoundParams:
    """Inputs shared by the corridor / small-ball / radius-R formulas."""

    L: float
    lam: float
    n: int
    R: float = 1.0
    x0_norm: float = 0.0
    c_universal: float = 1.0
    schedule: Optional[VarianceSchedule] = None
    k0_override: Optional[int] = None

    def __post_init__(self):
        if self.L < 1.0 or not math.isfinite(self.L):
            raise InvalidSpecError("L must be >= 1")
        if self.lam < 1.0 or not math.isfinite(self.lam):
            raise InvalidSpecError("lambda must be >= 1")
        if self.n < 1:
            raise InvalidSpecError("n must be >= 1")
        if not 1.0 <= self.R <= math.sqrt(self.n) * (1.0 + 1e-12):
            raise RadiusOutOfRangeError(f"R must lie in [1, sqrt(n)], got {self.R}")
        if self.x0_norm < 0.0:
            raise InvalidSpecError("x0_norm must be >= 0")
        if not self.c_universal > 0.0:
            raise InvalidSpecError("c_universal must be > 0")
        if self.k0_override is not None and self.k0_override < 1:
            raise InvalidSpecError("k0_override must be a positive integer")
        if self.schedule is None:
            object.__setattr__(self, "schedule", VarianceSchedule.constant(1.0, self.n))
        elif self.schedule.length < self.n:
            raise IndexOutOfRangeError("schedule shorter than n")

    def k0(self) -> int:
        if self.k0_override is not None:
            return int(self.k0_override)
        return compute_k0(self.L, self.lam)


def compute_k0(L: float, lam: float) -> int:
    """ceil(30 * L^24 * lambda^(8/5)), evaluated in extended precision."""
    if L < 1.0 or lam < 1.0:
        raise InvalidSpecError("compute_k0 requires L >= 1 and lambda >= 1")
    with mpmath.workdps(50):
        value = 30 * mpmath.mpf(L) ** 24 * mpmath.mpf(lam) ** (mpmath.mpf(8) / 5)
        if value > MAX_K0:
            raise BoundOverflowError(f"k0 = {mpmath.nstr(value, 8)} exceeds the integer range")
        return int(mpmath.ceil(value))


def compute_s(schedule: VarianceSchedule, L: float, k0: int, n: int, k: int) -> float:
    """s_k = L^2 * min(k, k0) + sum_{j=k0}^{k-1} v_{n-j} (empty sum for k <= k0)."""
    if not 1 <= k <= n:
        raise IndexOutOfRangeError(f"k must lie in [1, {n}], got {k}")
    base = L * L * min(k, k0)
    if k <= k0:
        return base
    lo = n - (k - 1)  # schedule index of v_{n-(k-1)}
    hi = n - k0       # schedule index of v_{n-k0}
    if lo < 1 or hi > schedule.length:
        raise IndexOutOfRangeError(
            f"s_{k} needs schedule entries v_{lo}..v_{hi}; schedule has {schedule.length}"
        )
    return base + float(np.sum(schedule.values[lo - 1 : hi]))


def compute_s_sequence(schedule: VarianceSchedule, L: float, k0: int, n: int) -> np.ndarray:
    """s_1..s_n as an array indexed 1-based (entry 0 is zero, unused)."""
    if schedule.length < n:
        raise IndexOutOfRangeError("schedule shorter than n")
    s = np.zeros(n + 1)
    top = min(k0, n)
    s[1 : top + 1] = L * L * np.arange(1, top + 1)
    acc = L * L * k0
    for k in range(k0 + 1, n + 1):
        acc += schedule.values[n - k]  # v_{n-(k-1)}
        s[k] = acc
    return s


def _beta_factor(s_j: float, s_jm1: float, L: float, j: int) -> float:
    return 1.0 - (s_j - s_jm1) / (2.0 * s_j) + 77.0 * L**3 * float(j) ** -1.125


def compute_beta(s, L: float, k0: int, k: int) -> float:
    """beta_k = e^2 * prod_{j=k0+1}^k (1 - (s_j - s_{j-1})/(2 s_j) + 77 L^3 j^{-9/8}).

    `s` is indexed 1-based (s[j] = s_j); the product is empty for k <= k0.
    Accumulated in log space so long products cannot overflow.
    """
    if k <= k0:
        return math.exp(2.0)
    log_acc = 2.0
    for j in range(k0 + 1, k + 1):
        factor = _beta_factor(float(s[j]), float(s[j - 1]), L, j)
        if factor <= 0.0:  # impossible for feasible schedules: the ratio is <= 1/2
            raise DomainError(f"nonpositive beta factor at j={j}")
        log_acc += math.log(factor)
    return math.exp(log_acc)


def compute_beta_sequence(s: np.ndarray, L: float, k0: int, n: int) -> np.ndarray:
    """beta_1..beta_n, 1-based like compute_s_sequence (entry 0 unused)."""
    beta = np.empty(n + 1)
    beta[0] = 0.0
    e2 = math.exp(2.0)
    top = min(k0, n)
    beta[1 : top + 1] = e2
    log_acc = 2.0
    for k in range(k0 + 1, n + 1):
        factor = _beta_factor(float(s[k]), float(s[k - 1]), L, k)
        if factor <= 0.0:
            raise DomainError(f"nonpositive beta factor at j={k}")
        log_acc += math.log(factor)
        beta[k] = math.exp(log_acc)
    return beta


def corridor_bound(params: BoundParams) -> float:
    """c * L^13 * lambda^(4/5) / sqrt(n) * exp(-|x0|^2 / (2 L^2 n))."""
    p = params
    return (
        p.c_universal
        * p.L**13
        * p.lam ** 0.8
        / math.sqrt(p.n)
        * math.exp(-(p.x0_norm**2) / (2.0 * p.L**2 * p.n))
    )


def smallball_bound(params: BoundParams) -> float:
    """c * L^20 / sqrt(n) * exp(-|x0|^2 / (3 L^2 n))."""
    p = params
    return p.c_universal * p.L**20 / math.sqrt(p.n) * math.exp(
        -(p.x0_norm**2) / (3.0 * p.L**2 * p.n)
    )


def largeball_bound(params: BoundParams) -> float:
    """c * L^20 * R / sqrt(n) * exp(-|x0|^2 / (6 L^2 n)) for 1 <= R <= sqrt(n)."""
    p = params
    if not 1.0 <= p.R <= math.sqrt(p.n) * (1.0 + 1e-12):
        raise RadiusOutOfRangeError(f"R must lie in [1, sqrt(n)], got {p.R}")
    return p.c_universal * p.L**20 * p.R / math.sqrt(p.n) * math.exp(
        -(p.x0_norm**2) / (6.0 * p.L**2 * p.n)
    )


def azuma_tail(gap: float, k: int, L: float) -> float:
    """Azuma-Hoeffding tail exp(-gap^2 / (2 k L^2)) for L-bounded increments."""
    if gap < 0.0:
        raise DomainError("gap must be >= 0")
    if k < 1:
        raise DomainError("k must be >= 1")
    return math.exp(-(gap * gap) / (2.0 * k * L * L))


class MagnitudeBounds(NamedTuple):
    quadratic: float     # L^2 / (2 (k-1))
    cross: float         # (k^(5/8) + lambda) L / (k-1)
    drift: float         # (k^(5/8) + lambda)^2 L^2 / (2 k (k-1))
    cap: float           # min(1/3, 2 L k^(-3/8))
    passed: bool


def magnitude_bounds(k: int, lam: float, L: float) -> MagnitudeBounds:
    """The three exponent-term magnitudes and the cap they must clear for k >= k0."""
    if k < 2:
        raise DomainError("magnitude bounds need k >= 2")
    grip = float(k) ** 0.625 + lam
    quadratic = L * L / (2.0 * (k - 1))
    cross = grip * L / (k - 1)
    drift = grip * grip * L * L / (2.0 * k * (k - 1))
    cap = min(1.0 / 3.0, 2.0 * L * float(k) ** -0.375)
    passed = quadratic <= cap and cross <= cap and drift <= cap
    return MagnitudeBounds(quadratic, cross, drift, cap, passed)


def check_exp_approx(y: float) -> float:
    """Margin |y|^3 - (e^y - (1 + y + y^2/2)); nonnegative certifies the bound at y."""
    if y > 1.0:
        raise DomainError("approximation is only claimed for y <= 1")
    return abs(y) ** 3 - (math.exp(y) - (1.0 + y + y * y / 2.0))


def corridor_indicator(path, lam: float) -> bool:
    """True iff |X_n| <= 1 and |X_{n-t}| <= t^(5/8) + lambda for all 0 <= t <= n."""
    if lam < 1.0:
        raise InvalidSpecError("corridor offset lambda must be >= 1")
    points = path.points if isinstance(path, PathSample) else np.asarray(path, dtype=np.float64)
    norms = np.linalg.norm(points, axis=1)
    n = norms.size - 1
    if norms[n] > 1.0:
        return False
    lookback = np.arange(n, -1, -1, dtype=np.float64) ** 0.625 + lam
    return bool(np.all(norms <= lookback))


@dataclass(frozen=True, eq=False)
class BoundCertificate:
    """Evaluated k0 / s / beta data plus the three bound values."""

    k0: int
    k0_overridden: bool
    s: np.ndarray          # 1-based, entry 0 unused
    beta: np.ndarray       # 1-based, entry 0 unused
    corridor_bound: float
    smallball_bound: float
    largeball_bound: float
    vacuous_flags: dict
    vacuous: bool
    params: BoundParams

    def to_dict(self, *, full_sequences: bool = False) -> dict:
        p = self.params
        out = {
            "k0": self.k0,
            "k0_overridden": self.k0_overridden,
            "off_theorem": self.k0_overridden,
            "corridor_bound": self.corridor_bound,
            "smallball_bound": self.smallball_bound,
            "largeball_bound": self.largeball_bound,
            "vacuous_flags": dict(self.vacuous_flags),
            "vacuous": self.vacuous,
            "c_universal": p.c_universal,
            "L": p.L,
            "lambda": p.lam,
            "n": p.n,
            "R": p.R,
            "x0_norm": p.x0_norm,
        }
        if full_sequences:
            out["s"] = self.s[1:].tolist()
            out["beta"] = self.beta[1:].tolist()
        else:
            out["s_n"] = float(self.s[-1])
            out["beta_n"] = float(self.beta[-1])
        return out


def build_certificate(params: BoundParams) -> BoundCertificate:
    """Evaluate every certificate quantity for one parameter set."""
    k0 = params.k0()
    s = compute_s_sequence(params.schedule, params.L, k0, params.n)
    beta = compute_beta_sequence(s, params.L, k0, params.n)
    corr = corridor_bound(params)
    small = smallball_bound(params)
    large = largeball_bound(params)
    flags = {
        "corridor": corr >= 1.0,
        "smallball": small >= 1.0,
        "largeball": large >= 1.0,
    }
    return BoundCertificate(
        k0=k0,
        k0_overridden=params.k0_override is not None,
        s=s,
        beta=beta,
        corridor_bound=corr,
        smallball_bound=small,
        largeball_bound=large,
        vacuous_flags=flags,
        vacuous=all(flags.values()),
        params=params,
    )
