"""Monte Carlo and exact small-ball probability estimation.

Replica fan-out contract: replica ``i`` of a run draws all of its randomness
from the stream addressed by ``(master_seed, i)``, and results are merged by
integer event counts.  Counts are associative and order-independent, so the
estimate is bit-identical for any worker count or batch size - that is the
parallel-determinism guarantee the acceptance suite checks.

Two ball metrics are supported, matching the two settings the bounds live in:
graph mode measures ``dist_G(Z_t, Z_0)`` (graph distance), embedded mode and
martingale mode measure the Euclidean norm of the displacement.  The caller
picks the mode explicitly; the two differ.

The exact dynamic-programming oracle convolves the one-step kernel of the
lattice walk over the reachable box and is the ground truth the Monte Carlo
paths are calibrated against.
"""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from statistics import NormalDist
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import graphs, rng
from .bounds import BoundParams, corridor_bound
from .errors import HorizonExceededError, InvalidSpecError, SizeLimitExceededError
from .martingale import MartingaleSpec, simulate_batch

__all__ = [
    "GraphWalkProcess",
    "EstimateRequest",
    "SmallBallEstimate",
    "EstimateRecord",
    "ScalingStudy",
    "wilson_interval",
    "z_for_level",
    "estimate_smallball",
    "smallball_profile",
    "directional_tail_counts",
    "corridor_probability",
    "exact_lattice_smallball",
    "scaling_study",
    "records_to_csv",
    "records_to_jsonl",
    "CSV_HEADER",
]

BATCH_ROWS = 32768
DP_LIMIT_1D = 4096
DP_LIMIT_2D = 512

CSV_HEADER = "epsilon,t,n,R,p_hat,ci_low,ci_high,ratio,method,bound_value"


# ---------------------------------------------------------------------------
# request / result types


@dataclass(frozen=True)
class GraphWalkProcess:
    """A walk process: ball in graph distance, or through an embedding."""

    graph: graphs.GraphSpec
    start: object = None
    mode: str = "graph"  # "graph" | "embedded"
    embedding: object = None

    def __post_init__(self):
        if self.mode not in ("graph", "embedded"):
            raise InvalidSpecError("mode must be 'graph' or 'embedded'")
        if self.start is None:
            object.__setattr__(self, "start", self.graph.origin)
        self.graph.validate_vertex(self.start)
        if self.mode == "embedded" and self.embedding is None:
            if self.graph.family == "lattice":
                object.__setattr__(self, "embedding", graphs.lattice_embedding(self.graph.d))
            else:
                emb = graphs.spectral_embedding(self.graph)
                if isinstance(emb, graphs.DegenerateSpectralGap):
                    raise InvalidSpecError(
                        f"spectral gap degenerate (lambda2 = {emb.lambda2}); no embedding"
                    )
                object.__setattr__(self, "embedding", emb)


Process = Union[MartingaleSpec, GraphWalkProcess]


@dataclass(frozen=True, eq=False)
class EstimateRequest:
    process: Process
    n: int
    replicas: int
    master_seed: int
    R: Optional[float] = None
    epsilon: Optional[float] = None
    ci_level: float = 0.99
    workers: int = 1

    def __post_init__(self):
        if self.n < 0:
            raise InvalidSpecError("n must be >= 0")
        if self.replicas < 1:
            raise InvalidSpecError("replicas must be >= 1")
        if not 0.0 < self.ci_level < 1.0:
            raise InvalidSpecError("ci_level must lie in (0, 1)")
        if self.workers < 1:
            raise InvalidSpecError("workers must be >= 1")
        if (self.R is None) == (self.epsilon is None):
            raise InvalidSpecError("exactly one of R and epsilon must be given")
        if self.epsilon is not None and self.epsilon <= 0:
            raise InvalidSpecError("epsilon must be > 0")
        if self.R is not None and self.R < 0:
            raise InvalidSpecError("R must be >= 0")

    @property
    def radius(self) -> float:
        if self.R is not None:
            return float(self.R)
        return float(self.epsilon) * math.sqrt(self.n)


@dataclass(frozen=True)
class SmallBallEstimate:
    p_hat: float
    ci_low: float
    ci_high: float
    replicas: int
    method: str
    successes: int
    exact: Optional[float] = None
    bound_value: Optional[float] = None

    def with_exact(self, value: float) -> "SmallBallEstimate":
        return replace(self, exact=float(value))

    def with_bound(self, value: float) -> "SmallBallEstimate":
        return replace(self, bound_value=float(value))


# ---------------------------------------------------------------------------
# Wilson intervals


def z_for_level(ci_level: float) -> float:
    if not 0.0 < ci_level < 1.0:
        raise InvalidSpecError("ci_level must lie in (0, 1)")
    return NormalDist().inv_cdf(0.5 + ci_level / 2.0)


def wilson_interval(successes: int, trials: int, z: float) -> tuple[float, float]:
    """Wilson score interval; stays inside [0, 1] and behaves at p near 0."""
    if trials < 1:
        raise InvalidSpecError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise InvalidSpecError("successes must lie in [0, trials]")
    if z <= 0:
        raise InvalidSpecError("z must be > 0")
    p = successes / trials
    z2n = z * z / trials
    denom = 1.0 + z2n
    center = (p + z2n / 2.0) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / trials + z2n / (4.0 * trials))
    # at the edges the interval endpoint is exactly the observed proportion
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == trials else min(1.0, center + half)
    return (low, high)


def _estimate_from_counts(successes: int, replicas: int, ci_level: float, method: str) -> SmallBallEstimate:
    z = z_for_level(ci_level)
    low, high = wilson_interval(successes, replicas, z)
    return SmallBallEstimate(
        p_hat=successes / replicas,
        ci_low=low,
        ci_high=high,
        replicas=replicas,
        method=method,
        successes=successes,
    )


# ---------------------------------------------------------------------------
# replica fan-out


def _tally(
    worker: Callable[[int, int], np.ndarray],
    replicas: int,
    workers: int,
    out_len: int,
) -> np.ndarray:
    """Sum worker(first, count) over fixed-size replica batches."""
    batches = [
        (first, min(BATCH_ROWS, replicas - first))
        for first in range(0, replicas, BATCH_ROWS)
    ]
    totals = np.zeros(out_len, dtype=np.int64)
    if workers == 1:
        for first, count in batches:
            totals += worker(first, count)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(lambda fc: worker(*fc), batches):
                totals += part
    return totals


def _martingale_counts(
    spec: MartingaleSpec,
    n: int,
    radii: Sequence[float],
    replicas: int,
    master_seed,
    workers: int,
) -> np.ndarray:
    radii_sq = np.asarray([r * r for r in radii])

    def worker(first: int, count: int) -> np.ndarray:
        bits = rng.coin_bit_matrix(master_seed, first, count, n)
        result = simulate_batch(spec, n, bits)
        delta = result.terminals - spec.x0[None, :]
        d2 = np.einsum("bd,bd->b", delta, delta)
        return np.array([int(np.count_nonzero(d2 <= r2)) for r2 in radii_sq], dtype=np.int64)

    return _tally(worker, replicas, workers, len(radii))


def _graph_counts(
    process: GraphWalkProcess,
    t: int,
    radii: Sequence[float],
    replicas: int,
    master_seed,
    workers: int,
) -> np.ndarray:
    graph = process.graph
    degree = graph.degree
    start = process.start
    if process.mode == "embedded" and graph.family != "lattice":
        emb = process.embedding
        if t > emb.horizon:
            raise HorizonExceededError(f"t = {t} exceeds embedding horizon {emb.horizon}")
    radii_arr = np.asarray(radii, dtype=np.float64)

    def worker(first: int, count: int) -> np.ndarray:
        draws = rng.uniform_int_matrix(master_seed, first, count, t, degree)
        terminals = graphs.walk_terminals(graph, start, draws)
        if process.mode == "graph":
            dist = graphs.terminal_graph_distances(graph, start, terminals)
            return np.array(
                [int(np.count_nonzero(dist <= r)) for r in radii_arr], dtype=np.int64
            )
        emb = process.embedding
        if graph.family == "lattice":
            delta = np.asarray(terminals, dtype=np.float64) - np.asarray(
                start, dtype=np.float64
            )[None, :]
            d2 = np.einsum("bd,bd->b", delta, delta)
        else:
            idx = graphs.terminal_vertex_indices(graph, terminals)
            lam_pow = emb.lambda2 ** (-t)
            delta = lam_pow * emb.table[idx] - emb.psi(start)[None, :]
            d2 = np.einsum("bd,bd->b", delta, delta)
        return np.array(
            [int(np.count_nonzero(d2 <= r * r)) for r in radii_arr], dtype=np.int64
        )

    return _tally(worker, replicas, workers, len(radii))


def _event_counts(req: EstimateRequest, radii: Sequence[float]) -> np.ndarray:
    if isinstance(req.process, MartingaleSpec):
        return _martingale_counts(
            req.process, req.n, radii, req.replicas, req.master_seed, req.workers
        )
    return _graph_counts(
        req.process, req.n, radii, req.replicas, req.master_seed, req.workers
    )


# ---------------------------------------------------------------------------
# estimators


def estimate_smallball(req: EstimateRequest) -> SmallBallEstimate:
    """Monte Carlo P(displacement <= R) with a Wilson interval.

    Martingale and embedded modes use the Euclidean displacement norm; graph
    mode uses graph distance.  Deterministic given (master_seed, replicas).
    """
    counts = _event_counts(req, [req.radius])
    return _estimate_from_counts(int(counts[0]), req.replicas, req.ci_level, "monte-carlo")


def smallball_profile(req: EstimateRequest, radii: Sequence[float]) -> list[SmallBallEstimate]:
    """Estimates for several radii computed from one shared set of paths."""
    counts = _event_counts(req, list(radii))
    return [
        _estimate_from_counts(int(c), req.replicas, req.ci_level, "monte-carlo")
        for c in counts
    ]


def directional_tail_counts(
    spec: MartingaleSpec,
    n: int,
    direction,
    thresholds: Sequence[float],
    replicas: int,
    master_seed,
    workers: int = 1,
) -> np.ndarray:
    """Counts of <u, X_n - X_0> >= r for each threshold r (Azuma comparisons)."""
    u = np.asarray(direction, dtype=np.float64)
    thr = np.asarray(thresholds, dtype=np.float64)

    def worker(first: int, count: int) -> np.ndarray:
        bits = rng.coin_bit_matrix(master_seed, first, count, n)
        result = simulate_batch(spec, n, bits)
        proj = (result.terminals - spec.x0[None, :]) @ u
        return np.array([int(np.count_nonzero(proj >= r)) for r in thr], dtype=np.int64)

    return _tally(worker, replicas, workers, len(thr))


def corridor_probability(
    spec: MartingaleSpec,
    lam: float,
    n: int,
    replicas: int,
    master_seed,
    *,
    ci_level: float = 0.99,
    workers: int = 1,
) -> SmallBallEstimate:
    """Monte Carlo probability of the corridor event, with bound comparison.

    The event: terminal norm <= 1 and every lookback norm <= t^(5/8) + lambda.
    The matching closed-form bound is attached when it is informative (< 1).
    """

    def worker(first: int, count: int) -> np.ndarray:
        bits = rng.coin_bit_matrix(master_seed, first, count, n)
        result = simulate_batch(spec, n, bits, corridor_lambda=lam)
        return np.array([int(np.count_nonzero(result.corridor_ok))], dtype=np.int64)

    counts = _tally(worker, replicas, workers, 1)
    est = _estimate_from_counts(int(counts[0]), replicas, ci_level, "monte-carlo")
    params = BoundParams(
        L=spec.L,
        lam=lam,
        n=max(n, 1),
        R=1.0,
        x0_norm=float(np.linalg.norm(spec.x0)),
    )
    value = corridor_bound(params)
    if value < 1.0:
        est = est.with_bound(value)
    return est


# ---------------------------------------------------------------------------
# exact dynamic-programming oracle


def exact_lattice_smallball(d: int, n: int, R: float, metric: str = "graph") -> float:
    """Exact P(walk displacement <= R) for SRW on Z^d by kernel convolution.

    metric 'graph' is the L1 (graph) distance; 'euclidean' the L2 norm
    (matching embedded mode).  For d = 1 the two coincide.
    """
    if d not in (1, 2):
        raise InvalidSpecError("exact oracle supports d in {1, 2}")
    if metric not in ("graph", "euclidean"):
        raise InvalidSpecError("metric must be 'graph' or 'euclidean'")
    if n < 0:
        raise InvalidSpecError("n must be >= 0")
    if d == 1 and n > DP_LIMIT_1D:
        raise SizeLimitExceededError(f"d=1 oracle capped at n = {DP_LIMIT_1D}")
    if d == 2 and n > DP_LIMIT_2D:
        raise SizeLimitExceededError(f"d=2 oracle capped at n = {DP_LIMIT_2D}")

    if d == 1:
        p = np.zeros(2 * n + 1)
        p[n] = 1.0
        for _ in range(n):
            q = np.zeros_like(p)
            q[:-1] += 0.5 * p[1:]
            q[1:] += 0.5 * p[:-1]
            p = q
        offsets = np.abs(np.arange(-n, n + 1))
        mask = offsets <= math.floor(R + 1e-12)
        total = float(p.sum())
    else:
        size = 2 * n + 1
        p = np.zeros((size, size))
        p[n, n] = 1.0
        for _ in range(n):
            q = np.zeros_like(p)
            q[:-1, :] += 0.25 * p[1:, :]
            q[1:, :] += 0.25 * p[:-1, :]
            q[:, :-1] += 0.25 * p[:, 1:]
            q[:, 1:] += 0.25 * p[:, :-1]
            p = q
        xs = np.abs(np.arange(-n, n + 1))
        if metric == "graph":
            dist = xs[:, None] + xs[None, :]
            mask = dist <= math.floor(R + 1e-12)
        else:
            dist2 = xs[:, None] ** 2 + xs[None, :] ** 2
            mask = dist2 <= math.floor(R * R + 1e-9)
        total = float(p.sum())
    if abs(total - 1.0) > 1e-12:
        raise SizeLimitExceededError(f"probability mass drifted by {abs(total - 1.0)}")
    return float(p[mask].sum())


# ---------------------------------------------------------------------------
# scaling studies and record output


@dataclass(frozen=True)
class EstimateRecord:
    """One output row in the fixed CSV/JSONL schema."""

    n: int
    R: float
    p_hat: float
    ci_low: float
    ci_high: float
    method: str
    seed: object
    replicas: int
    epsilon: Optional[float] = None
    t: Optional[int] = None
    ratio: Optional[float] = None
    bound_value: Optional[float] = None


@dataclass(frozen=True)
class ScalingStudy:
    rows: tuple
    c_hat: float


def record_from_estimate(
    est: SmallBallEstimate,
    *,
    n: int,
    R: float,
    seed,
    epsilon: Optional[float] = None,
    t: Optional[int] = None,
    ratio: Optional[float] = None,
) -> EstimateRecord:
    return EstimateRecord(
        n=n,
        R=R,
        p_hat=est.p_hat,
        ci_low=est.ci_low,
        ci_high=est.ci_high,
        method=est.method,
        seed=seed,
        replicas=est.replicas,
        epsilon=epsilon,
        t=t,
        ratio=ratio,
        bound_value=est.bound_value,
    )


def scaling_study(
    process: GraphWalkProcess,
    epsilons: Sequence[float],
    multipliers: Sequence[float],
    replicas: int,
    master_seed,
    *,
    ci_level: float = 0.99,
    workers: int = 1,
    t_cap: Optional[int] = None,
) -> ScalingStudy:
    """Sweep (epsilon, multiplier) cells of the diffusive-walk bound.

    Each cell runs at t = ceil(m / eps^2) >= 1/eps^2 with ball radius
    eps * sqrt(t); rows report p_hat / eps, and C_hat is the largest
    ci_high / eps over all rows.  Exact-DP companion rows are emitted for
    lattice processes within the oracle's size caps.
    """
    rows: list[EstimateRecord] = []
    c_hat = 0.0
    for eps in epsilons:
        if eps <= 0:
            raise InvalidSpecError("epsilon must be > 0")
        for mult in multipliers:
            if mult < 1:
                raise InvalidSpecError("multipliers must be >= 1 so that t >= 1/eps^2")
            t = math.ceil(mult / (eps * eps))
            if t_cap is not None and t > t_cap:
                continue
            R = eps * math.sqrt(t)
            req = EstimateRequest(
                process=process,
                n=t,
                replicas=replicas,
                master_seed=master_seed,
                R=R,
                ci_level=ci_level,
                workers=workers,
            )
            est = estimate_smallball(req)
            exact = _exact_for_process(process, t, R)
            if exact is not None:
                est = est.with_exact(exact)
            rows.append(
                record_from_estimate(
                    est, n=t, R=R, seed=master_seed, epsilon=eps, t=t, ratio=est.p_hat / eps
                )
            )
            c_hat = max(c_hat, est.ci_high / eps)
            if exact is not None:
                rows.append(
                    EstimateRecord(
                        n=t,
                        R=R,
                        p_hat=exact,
                        ci_low=exact,
                        ci_high=exact,
                        method="exact-dp",
                        seed=master_seed,
                        replicas=0,
                        epsilon=eps,
                        t=t,
                        ratio=exact / eps,
                    )
                )
                c_hat = max(c_hat, exact / eps)
    return ScalingStudy(rows=tuple(rows), c_hat=c_hat)


def _exact_for_process(process: GraphWalkProcess, t: int, R: float) -> Optional[float]:
    if process.graph.family != "lattice" or process.graph.d > 2:
        return None
    limit = DP_LIMIT_1D if process.graph.d == 1 else DP_LIMIT_2D
    if t > limit:
        return None
    metric = "graph" if process.mode == "graph" else "euclidean"
    return exact_lattice_smallball(process.graph.d, t, R, metric=metric)


# ---------------------------------------------------------------------------
# output formats


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records: Sequence[EstimateRecord], provenance: Optional[dict] = None) -> str:
    """Fixed-header CSV; provenance rides in a leading comment line."""
    out = io.StringIO()
    if provenance is not None:
        out.write(f"# provenance: {json.dumps(provenance, sort_keys=True)}\n")
    out.write(CSV_HEADER + "\n")
    for r in records:
        fields = [
            _fmt(r.epsilon),
            _fmt(r.t),
            _fmt(r.n),
            _fmt(r.R),
            _fmt(r.p_hat),
            _fmt(r.ci_low),
            _fmt(r.ci_high),
            _fmt(r.ratio),
            r.method,
            _fmt(r.bound_value),
        ]
        out.write(",".join(fields) + "\n")
    return out.getvalue()


def records_to_jsonl(records: Sequence[EstimateRecord]) -> str:
    lines = []
    for r in records:
        lines.append(
            json.dumps(
                {
                    "epsilon": r.epsilon,
                    "t": r.t,
                    "n": r.n,
                    "R": r.R,
                    "p_hat": r.p_hat,
                    "ci_low": r.ci_low,
                    "ci_high": r.ci_high,
                    "ratio": r.ratio,
                    "method": r.method,
                    "bound_value": r.bound_value,
                    "seed": r.seed,
                    "replicas": r.replicas,
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")
