"""Hilbert-space-valued martingales with deterministic variance schedules.

A process is specified by a Lipschitz cap ``L``, a deterministic schedule of
conditional variances ``v_1, v_2, ...`` with every ``v_k >= 1``, a start point
``x0``, and a *controller* that picks a unit direction ``u`` from the current
state and step index.  Each step then moves ``+sqrt(v_k) * u`` or
``-sqrt(v_k) * u`` on a fair coin, so the conditional mean is the current
state and the conditional second moment is exactly ``v_k``.  This two-point
family realizes the variance and Lipschitz requirements pathwise rather than
approximately, which is what makes the validators in this module exact.

Controllers are adversaries: the tangential controller always steps
orthogonally to the current state (in dimension 2 with ``v == 1`` this forces
``|X_n|^2 = n`` on every path), the radial controllers aim along or against
the current state, and time-switched composites chain behaviors.

Deterministic tie-breaks (fixed so that runs are reproducible):

* radial controllers at the origin step along the first coordinate axis;
* the tangential direction is the current state rotated +90 degrees in the
  plane of its first two coordinates, falling back to the first axis when
  that plane projection is zero;
* coin bit 1 means the ``+`` branch.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from . import rng
from .errors import (
    ConfigError,
    InfeasibleVarianceError,
    InvalidSpecError,
    NonUnitDirectionError,
    ScheduleTooShortError,
    ZeroTerminalPointError,
)
from .geometry import UNIT_TOL, as_vector, is_unit, norm, rot90_first_two

__all__ = [
    "VarianceSchedule",
    "FixedAxis",
    "FixedDirection",
    "Tangential",
    "RadialOutward",
    "RadialInward",
    "TimeSwitched",
    "Controller",
    "controller_from_config",
    "controller_to_config",
    "standard_suite",
    "MartingaleSpec",
    "PathSample",
    "ConditionReport",
    "two_point_increment",
    "simulate_path",
    "simulate_batch",
    "BatchResult",
    "validate_conditions",
    "extend_path_for_radius",
]

INCREMENT_TOL = 1e-9


# ---------------------------------------------------------------------------
# variance schedules


@dataclass(frozen=True, eq=False)
class VarianceSchedule:
    """Deterministic conditional variances v_1, v_2, ... (one per step)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise InvalidSpecError("schedule must be a 1-D sequence")
        if v.size and (not np.all(np.isfinite(v)) or np.any(v < 1.0)):
            raise InvalidSpecError("(M1) violation: every scheduled v_n must satisfy v_n >= 1")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, v: float, n: int) -> "VarianceSchedule":
        return cls(np.full(n, float(v)))

    @property
    def length(self) -> int:
        return int(self.values.size)

    def v(self, step: int) -> float:
        """Variance of step `step` (1-based)."""
        if not 1 <= step <= self.length:
            raise ScheduleTooShortError(f"schedule has {self.length} entries, step {step} requested")
        return float(self.values[step - 1])


# ---------------------------------------------------------------------------
# controllers


@dataclass(frozen=True)
class FixedAxis:
    """Always step along coordinate axis `axis`."""

    axis: int = 0
    kind = "fixed-axis"

    def unit_direction(self, state: np.ndarray, step: int) -> np.ndarray:
        u = np.zeros_like(state)
        u[self.axis] = 1.0
        return u


@dataclass(frozen=True)
class FixedDirection:
    """Always step along one fixed unit vector (radius padding uses this)."""

    direction: tuple[float, ...]
    kind = "fixed-direction"

    def __post_init__(self):
        d = as_vector(self.direction)
        if not is_unit(d):
            raise NonUnitDirectionError("fixed direction must be a unit vector")
        object.__setattr__(self, "direction", tuple(float(x) for x in d))

    def unit_direction(self, state: np.ndarray, step: int) -> np.ndarray:
        return np.asarray(self.direction, dtype=np.float64)


@dataclass(frozen=True)
class Tangential:
    """Step orthogonally to the current state (the spiral adversary)."""

    kind = "tangential"

    def unit_direction(self, state: np.ndarray, step: int) -> np.ndarray:
        r = math.hypot(state[0], state[1])
        u = np.zeros_like(state)
        if r == 0.0:
            u[0] = 1.0
        else:
            u[0] = -state[1] / r
            u[1] = state[0] / r
        return u


@dataclass(frozen=True)
class RadialOutward:
    """Step along the current state; first axis at the origin."""

    kind = "radial-outward"

    def unit_direction(self, state: np.ndarray, step: int) -> np.ndarray:
        r = norm(state)
        u = np.zeros_like(state)
        if r == 0.0:
            u[0] = 1.0
        else:
            u[:] = state / r
        return u


@dataclass(frozen=True)
class RadialInward:
    """Step against the current state; first axis at the origin."""

    kind = "radial-inward"

    def unit_direction(self, state: np.ndarray, step: int) -> np.ndarray:
        r = norm(state)
        u = np.zeros_like(state)
        if r == 0.0:
            u[0] = 1.0
        else:
            u[:] = -state / r
        return u


@dataclass(frozen=True)
class TimeSwitched:
    """Composite controller: stages[i] drives steps in (switch_{i-1}, switch_i].

    switch_times must be strictly increasing; stage 0 drives steps
    1..switch_times[0] and the last stage drives everything past the final
    switch time.
    """

    switch_times: tuple[int, ...]
    stages: tuple["Controller", ...]
    kind = "time-switched"

    def __post_init__(self):
        times = tuple(int(t) for t in self.switch_times)
        if any(t < 1 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidSpecError("switch times must be strictly increasing and >= 1")
        if len(self.stages) != len(times) + 1:
            raise InvalidSpecError("need exactly len(switch_times) + 1 stages")
        object.__setattr__(self, "switch_times", times)
        object.__setattr__(self, "stages", tuple(self.stages))

    def stage_at(self, step: int) -> "Controller":
        return self.stages[bisect.bisect_left(self.switch_times, step)]

    def unit_direction(self, state: np.ndarray, step: int) -> np.ndarray:
        return self.stage_at(step).unit_direction(state, step)


Controller = Union[FixedAxis, FixedDirection, Tangential, RadialOutward, RadialInward, TimeSwitched]

_PLANAR_KINDS = (Tangential, RadialOutward, RadialInward)


def _requires_plane(controller: Controller) -> bool:
    if isinstance(controller, _PLANAR_KINDS):
        return True
    if isinstance(controller, TimeSwitched):
        return any(_requires_plane(s) for s in controller.stages)
    return False


def _resolve(controller: Controller, step: int) -> Controller:
    while isinstance(controller, TimeSwitched):
        controller = controller.stage_at(step)
    return controller


def controller_from_config(config: dict) -> Controller:
    """Build a controller from a JSON-style {"kind": ..., ...} mapping."""
    if not isinstance(config, dict) or "kind" not in config:
        raise ConfigError("controller config must be a mapping with a 'kind' field")
    cfg = dict(config)
    kind = cfg.pop("kind")
    try:
        if kind == "fixed-axis":
            return FixedAxis(axis=int(cfg.pop("axis", 0)))
        if kind == "fixed-direction":
            return FixedDirection(direction=tuple(cfg.pop("direction")))
        if kind == "tangential":
            return Tangential()
        if kind == "radial-outward":
            return RadialOutward()
        if kind == "radial-inward":
            return RadialInward()
        if kind == "time-switched":
            times = tuple(int(t) for t in cfg.pop("switch_times"))
            stages = tuple(controller_from_config(c) for c in cfg.pop("stages"))
            return TimeSwitched(switch_times=times, stages=stages)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad controller config for kind {kind!r}: {exc}") from exc
    finally:
        if cfg:
            raise ConfigError(f"unknown controller fields: {sorted(cfg)}")
    raise ConfigError(f"unknown controller kind {kind!r}")


def controller_to_config(controller: Controller) -> dict:
    if isinstance(controller, FixedAxis):
        return {"kind": "fixed-axis", "axis": controller.axis}
    if isinstance(controller, FixedDirection):
        return {"kind": "fixed-direction", "direction": list(controller.direction)}
    if isinstance(controller, TimeSwitched):
        return {
            "kind": "time-switched",
            "switch_times": list(controller.switch_times),
            "stages": [controller_to_config(s) for s in controller.stages],
        }
    return {"kind": controller.kind}


def standard_suite(n: int) -> dict[str, Controller]:
    """The five-controller suite exercised by the acceptance sweeps."""
    if n < 4:
        raise InvalidSpecError("suite composite needs n >= 4")
    return {
        "fixed-axis": FixedAxis(0),
        "tangential": Tangential(),
        "radial-inward": RadialInward(),
        "radial-outward": RadialOutward(),
        "time-switched": TimeSwitched(
            switch_times=(n // 4, n // 2),
            stages=(FixedAxis(0), Tangential(), RadialInward()),
        ),
    }


# ---------------------------------------------------------------------------
# specs and paths


@dataclass(frozen=True, eq=False)
class MartingaleSpec:
    """Process definition: Lipschitz cap, schedule, controller, start point.

    ``controller`` may be None for externally driven paths (e.g. graph
    embeddings); such specs cannot be simulated directly.
    """

    L: float
    schedule: VarianceSchedule
    controller: Optional[Controller]
    x0: np.ndarray
    dim: int

    def __post_init__(self):
        if not (math.isfinite(self.L) and self.L >= 1.0):
            raise InvalidSpecError("(M2) requires a Lipschitz bound L >= 1")
        if self.dim < 1:
            raise InvalidSpecError("dim must be >= 1")
        x0 = as_vector(self.x0, self.dim)
        object.__setattr__(self, "x0", x0)
        sched = self.schedule
        if sched.values.size and float(np.max(sched.values)) > self.L**2 * (1.0 + 1e-12):
            raise InfeasibleVarianceError(
                "schedule infeasible: sqrt(v_n) must not exceed L for two-point increments"
            )
        ctrl = self.controller
        if ctrl is not None:
            if _requires_plane(ctrl) and self.dim < 2:
                raise InvalidSpecError("tangential/radial controllers need dim >= 2")
            if isinstance(ctrl, FixedAxis) and not 0 <= ctrl.axis < self.dim:
                raise InvalidSpecError(f"axis {ctrl.axis} out of range for dim {self.dim}")

    @classmethod
    def unit(cls, controller: Controller, n: int, dim: int = 2, L: float = 1.0,
             x0=None) -> "MartingaleSpec":
        """Convenience: v == 1 schedule of length n, default start at 0."""
        start = np.zeros(dim) if x0 is None else as_vector(x0, dim)
        return cls(L=L, schedule=VarianceSchedule.constant(1.0, n),
                   controller=controller, x0=start, dim=dim)


@dataclass(frozen=True, eq=False)
class PathSample:
    """A simulated trajectory X_0 ... X_n with its spec and seed."""

    points: np.ndarray  # (n+1, dim)
    spec: MartingaleSpec
    seed: object

    @property
    def n(self) -> int:
        return self.points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def increments(self) -> np.ndarray:
        return np.diff(self.points, axis=0)

    def increment_norms(self) -> np.ndarray:
        return np.linalg.norm(self.increments(), axis=1)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    @property
    def terminal(self) -> np.ndarray:
        return self.points[-1]


class ConditionReport(NamedTuple):
    mean_norm: float
    second_moment: float
    max_increment: float
    passed: bool
    method: str


# ---------------------------------------------------------------------------
# operations


def two_point_increment(state, u, v: float, coin: int, L: float) -> np.ndarray:
    """One canonical increment: state +/- sqrt(v) * u on the fair coin.

    coin 1 takes the + branch.  The two branches average to `state`, and
    the increment's second moment is exactly v.
    """
    state = as_vector(state)
    u = as_vector(u, state.size)
    if abs(norm(u) - 1.0) > UNIT_TOL:
        raise NonUnitDirectionError(f"direction norm {norm(u)!r} is not 1 within {UNIT_TOL}")
    step = math.sqrt(v)
    if step > L + 1e-12 * max(1.0, L):
        raise InfeasibleVarianceError(f"sqrt(v) = {step} exceeds L = {L}")
    sign = 1.0 if coin else -1.0
    return state + sign * step * u


class BatchResult(NamedTuple):
    terminals: np.ndarray            # (B, dim)
    points: Optional[np.ndarray]     # (n+1, dim, B) when collected
    corridor_ok: Optional[np.ndarray]  # (B,) bool when requested


def simulate_batch(
    spec: MartingaleSpec,
    n: int,
    bits: np.ndarray,
    *,
    collect_points: bool = False,
    corridor_lambda: Optional[float] = None,
) -> BatchResult:
    """Advance a batch of paths, one per row of the (B, n) coin-bit matrix.

    All rows share the spec; row b uses bits[b, k-1] as the step-k coin.  The
    state layout is (dim, B) internally so each coordinate is contiguous; the
    arithmetic is identical for B == 1 and large B, which is what makes
    single-path simulation and Monte Carlo fan-out bit-compatible.
    """
    if spec.controller is None:
        raise InvalidSpecError("spec has no controller; cannot simulate")
    if spec.schedule.length < n:
        raise ScheduleTooShortError(
            f"schedule has {spec.schedule.length} entries, {n} steps requested"
        )
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 2 or bits.shape[1] != n:
        raise InvalidSpecError(f"bit matrix must have shape (B, {n})")
    B = bits.shape[0]
    dim = spec.dim
    sqv = np.sqrt(spec.schedule.values[:n])

    states = np.repeat(spec.x0[:, None], B, axis=1)
    bits_t = np.ascontiguousarray(bits.T)
    scaled = np.empty(B)
    r = np.empty(B)
    inv = np.empty(B)
    dx = np.empty(B)
    dy = np.empty(B)

    points = None
    if collect_points:
        points = np.empty((n + 1, dim, B))
        points[0] = states

    ok = None
    thr2 = None
    if corridor_lambda is not None:
        lam = float(corridor_lambda)
        if lam < 1.0:
            raise InvalidSpecError("corridor offset lambda must be >= 1")
        # X_k is constrained at lookback t = n - k; the terminal is also <= 1
        thr = (np.arange(n, -1, -1, dtype=np.float64) ** 0.625) + lam
        thr[n] = 1.0
        thr2 = thr * thr
        ok = np.ones(B, dtype=bool)
        if float(spec.x0 @ spec.x0) > thr2[0]:
            ok[:] = False

    for k in range(1, n + 1):
        sq = sqv[k - 1]
        np.multiply(bits_t[k - 1], 2.0 * sq, out=scaled)
        scaled -= sq

        ctrl = _resolve(spec.controller, k)
        if isinstance(ctrl, FixedAxis):
            states[ctrl.axis] += scaled
        elif isinstance(ctrl, FixedDirection):
            for i, di in enumerate(ctrl.direction):
                if di != 0.0:
                    states[i] += di * scaled
        elif isinstance(ctrl, Tangential):
            x = states[0]
            y = states[1]
            np.hypot(x, y, out=r)
            zero = r == 0.0
            any_zero = bool(zero.any())
            if any_zero:
                r[zero] = 1.0
            np.divide(scaled, r, out=inv)
            np.multiply(y, inv, out=dx)
            np.negative(dx, out=dx)
            np.multiply(x, inv, out=dy)
            if any_zero:
                dx[zero] = scaled[zero]
                dy[zero] = 0.0
            x += dx
            y += dy
        elif isinstance(ctrl, (RadialOutward, RadialInward)):
            np.einsum("db,db->b", states, states, out=r)
            np.sqrt(r, out=r)
            zero = r == 0.0
            any_zero = bool(zero.any())
            if any_zero:
                r[zero] = 1.0
            np.divide(scaled, r, out=inv)
            if isinstance(ctrl, RadialInward):
                np.negative(inv, out=inv)
            if any_zero:
                inv[zero] = 0.0
            for i in range(dim):
                states[i] += states[i] * inv
            if any_zero:
                states[0][zero] += scaled[zero]
        else:  # pragma: no cover - exhaustive over controller kinds
            raise InvalidSpecError(f"cannot simulate controller {ctrl!r}")

        if collect_points:
            points[k] = states
        if ok is not None:
            np.einsum("db,db->b", states, states, out=r)
            ok &= r <= thr2[k]

    terminals = np.ascontiguousarray(states.T)
    return BatchResult(terminals=terminals, points=points, corridor_ok=ok)


def simulate_path(spec: MartingaleSpec, n: int, seed) -> PathSample:
    """Simulate one path of n steps; deterministic given (spec, n, seed)."""
    bits = rng.coin_bits(seed, n).reshape(1, n)
    result = simulate_batch(spec, n, bits, collect_points=True)
    points = np.ascontiguousarray(result.points[:, :, 0])
    return PathSample(points=points, spec=spec, seed=seed)


def validate_conditions(
    spec: MartingaleSpec,
    state,
    step: int,
    samples: int,
    seed,
    *,
    force_monte_carlo: bool = False,
    L: Optional[float] = None,
) -> ConditionReport:
    """Check the variance and Lipschitz conditions at one (state, step).

    Two-point increments make the check analytic: the two branches average to
    the state, the second moment is exactly v_step, and the increment norm is
    sqrt(v_step).  `force_monte_carlo` samples the increment law instead and
    applies 5-standard-error gates, for cross-validation of the analytic path.
    `L` checks feasibility against a cap other than spec.L (specs themselves
    only construct when feasible, so the failing branch needs an external cap).
    """
    if samples < 1:
        raise InvalidSpecError("samples must be >= 1")
    cap = spec.L if L is None else float(L)
    state = as_vector(state, spec.dim)
    v = spec.schedule.v(step)
    step_len = math.sqrt(v)
    feasible = step_len <= cap + 1e-12 * max(1.0, cap)
    if not force_monte_carlo:
        return ConditionReport(
            mean_norm=0.0,
            second_moment=v,
            max_increment=step_len,
            passed=feasible,
            method="analytic",
        )

    ctrl = _resolve(spec.controller, step)
    u = ctrl.unit_direction(state, step)
    bits = rng.coin_bits(seed, samples).astype(np.float64)
    signs = 2.0 * bits - 1.0
    comps = signs * step_len                 # signed component along u
    mean_vec = float(np.mean(comps))
    mean_norm = abs(mean_vec) * norm(u)
    second = float(np.mean(comps**2))
    max_inc = float(np.max(np.abs(comps)))
    se_mean = float(np.std(comps)) / math.sqrt(samples)
    se_second = float(np.std(comps**2)) / math.sqrt(samples)
    passed = (
        abs(second - v) <= 5.0 * se_second
        and mean_norm <= 5.0 * se_mean
        and max_inc <= cap + INCREMENT_TOL
    )
    return ConditionReport(
        mean_norm=mean_norm,
        second_moment=second,
        max_increment=max_inc,
        passed=passed,
        method="monte-carlo",
    )


def extend_path_for_radius(path: PathSample, R: float, seed) -> PathSample:
    """Pad a path with floor(R^2) unit +/- steps along its terminal direction.

    The appended segment has v == 1 and the same Lipschitz cap, which reduces
    a radius-R ball event for the original path to a radius-1 event for the
    padded one.
    """
    if R < 1.0:
        raise InvalidSpecError("radius padding requires R >= 1")
    terminal = path.points[-1]
    t_norm = norm(terminal)
    if t_norm == 0.0:
        raise ZeroTerminalPointError("terminal point is the origin; padding direction undefined")
    m = int(math.floor(R * R))
    u = terminal / t_norm
    bits = rng.coin_bits(seed, m).astype(np.float64)
    signs = 2.0 * bits - 1.0
    appended = terminal[None, :] + np.cumsum(signs)[:, None] * u[None, :]
    points = np.vstack([path.points, appended])

    n = path.n
    old_values = path.spec.schedule.values[:n]
    new_schedule = VarianceSchedule(np.concatenate([old_values, np.ones(m)]))
    pad_ctrl = FixedDirection(direction=tuple(u))
    if path.spec.controller is None or n == 0:
        new_ctrl: Controller = pad_ctrl
    else:
        new_ctrl = TimeSwitched(switch_times=(n,), stages=(path.spec.controller, pad_ctrl))
    new_spec = MartingaleSpec(
        L=path.spec.L,
        schedule=new_schedule,
        controller=new_ctrl,
        x0=path.spec.x0,
        dim=path.spec.dim,
    )
    return PathSample(points=points, spec=new_spec, seed=seed)
