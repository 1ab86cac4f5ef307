"""Vertex-transitive graph families, walks, and martingale embeddings.

Supported families: cycle(m), torus(m, d), the infinite lattice Z^d,
hypercube(d), complete(m), and custom adjacency lists (declared
vertex-transitive by the caller).  Lattices are represented implicitly by
integer coordinate tuples; all other families are finite.

Walks, in every family, use a canonical neighbor enumeration so that a
single path and a batched Monte Carlo run make identical moves from
identical draws:

* cycle: draw 0 -> +1, draw 1 -> -1 (mod m);
* torus/lattice: draw j -> coordinate j // 2, direction + for even j;
* hypercube: draw j flips bit j;
* complete: draw j -> vertex j, skipping the current vertex;
* custom: draw j -> j-th entry of the vertex's sorted adjacency row.

Embeddings into Euclidean space turn walks into martingales: the identity
map does it for Z^d, and for finite graphs the map built from an orthonormal
basis of the second-eigenvalue eigenspace of the transition matrix does it
after rescaling, valid up to the relaxation horizon ceil(1/(1-lambda)).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import rng
from .errors import (
    ConfigError,
    EmbeddingNotHomogeneousError,
    HorizonExceededError,
    InvalidSpecError,
    InvalidVertexError,
    NonRegularGraphError,
    NotAnEigenfunctionError,
)
from .martingale import MartingaleSpec, PathSample, VarianceSchedule

__all__ = [
    "GraphSpec",
    "cycle",
    "torus",
    "lattice",
    "hypercube",
    "complete",
    "custom",
    "load_adjacency",
    "parse_adjacency",
    "WalkPath",
    "random_walk",
    "walk_terminals",
    "terminal_graph_distances",
    "terminal_vertex_indices",
    "graph_distance",
    "SpectralEmbedding",
    "DegenerateSpectralGap",
    "spectral_embedding",
    "eigexpand_check",
    "LatticeEmbedding",
    "lattice_embedding",
    "embedded_martingale",
    "embedded_schedule",
    "lipschitz_constant",
    "martingale_identity_residual",
]

EIGEN_RESIDUAL_TOL = 1e-10
EIGEN_GROUP_TOL = 1e-8
IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class GraphSpec:
    family: str
    m: Optional[int] = None
    d: Optional[int] = None
    adjacency: Optional[tuple[tuple[int, ...], ...]] = None

    # -- structure ---------------------------------------------------------

    @property
    def degree(self) -> int:
        if self.family == "cycle":
            return 2
        if self.family == "torus":
            return 2 * self.d
        if self.family == "lattice":
            return 2 * self.d
        if self.family == "hypercube":
            return self.d
        if self.family == "complete":
            return self.m - 1
        return len(self.adjacency[0])

    @property
    def is_finite(self) -> bool:
        return self.family != "lattice"

    @property
    def num_vertices(self) -> Optional[int]:
        if self.family == "cycle" or self.family == "complete":
            return self.m
        if self.family == "torus":
            return self.m**self.d
        if self.family == "hypercube":
            return 2**self.d
        if self.family == "custom":
            return len(self.adjacency)
        return None

    def validate_vertex(self, v) -> None:
        if self.family in ("cycle", "complete", "hypercube", "custom"):
            n = self.num_vertices
            if not (isinstance(v, (int, np.integer)) and 0 <= v < n):
                raise InvalidVertexError(f"vertex {v!r} invalid for {self.label()}")
        elif self.family == "torus":
            if len(v) != self.d or not all(0 <= int(c) < self.m for c in v):
                raise InvalidVertexError(f"vertex {v!r} invalid for {self.label()}")
        else:  # lattice
            if len(v) != self.d:
                raise InvalidVertexError(f"vertex {v!r} invalid for {self.label()}")

    def neighbors(self, v) -> list:
        """Neighbors in the canonical walk order (see module docstring)."""
        self.validate_vertex(v)
        if self.family == "cycle":
            return [(v + 1) % self.m, (v - 1) % self.m]
        if self.family in ("torus", "lattice"):
            out = []
            for j in range(2 * self.d):
                coord, sign = j // 2, 1 if j % 2 == 0 else -1
                w = list(v)
                w[coord] += sign
                if self.family == "torus":
                    w[coord] %= self.m
                out.append(tuple(w))
            return out
        if self.family == "hypercube":
            return [v ^ (1 << j) for j in range(self.d)]
        if self.family == "complete":
            return [j if j < v else j + 1 for j in range(self.m - 1)]
        return list(self.adjacency[v])

    def vertices(self) -> list:
        if not self.is_finite:
            raise InvalidSpecError("infinite graphs have no vertex enumeration")
        if self.family == "torus":
            ranges = [range(self.m)] * self.d
            out = []

            def rec(prefix):
                if len(prefix) == self.d:
                    out.append(tuple(prefix))
                    return
                for c in range(self.m):
                    rec(prefix + [c])

            rec([])
            return out
        return list(range(self.num_vertices))

    def vertex_index(self, v) -> int:
        self.validate_vertex(v)
        if self.family == "torus":
            idx = 0
            for c in v:
                idx = idx * self.m + int(c)
            return idx
        return int(v)

    def index_vertex(self, idx: int):
        if self.family == "torus":
            coords = []
            for _ in range(self.d):
                coords.append(idx % self.m)
                idx //= self.m
            return tuple(reversed(coords))
        return int(idx)

    def neighbor_index_table(self) -> np.ndarray:
        """(n, degree) table of neighbor indices, canonical order per row."""
        if not self.is_finite:
            raise InvalidSpecError("infinite graphs have no neighbor table")
        n, d = self.num_vertices, self.degree
        table = np.empty((n, d), dtype=np.int64)
        for v in self.vertices():
            i = self.vertex_index(v)
            table[i] = [self.vertex_index(w) for w in self.neighbors(v)]
        return table

    def transition_matrix(self) -> np.ndarray:
        table = self.neighbor_index_table()
        n = table.shape[0]
        P = np.zeros((n, n))
        rows = np.repeat(np.arange(n), table.shape[1])
        np.add.at(P, (rows, table.ravel()), 1.0 / self.degree)
        return P

    def label(self) -> str:
        if self.family == "cycle":
            return f"cycle({self.m})"
        if self.family == "torus":
            return f"torus({self.m},{self.d})"
        if self.family == "lattice":
            return f"lattice({self.d})"
        if self.family == "hypercube":
            return f"hypercube({self.d})"
        if self.family == "complete":
            return f"complete({self.m})"
        return f"custom({self.num_vertices})"

    @property
    def origin(self):
        """Canonical start vertex."""
        if self.family in ("torus", "lattice"):
            return (0,) * self.d
        return 0


def cycle(m: int) -> GraphSpec:
    if m < 3:
        raise InvalidSpecError("cycle needs m >= 3")
    return GraphSpec(family="cycle", m=m)


def torus(m: int, d: int) -> GraphSpec:
    if m < 3 or d < 1:
        raise InvalidSpecError("torus needs m >= 3 and d >= 1")
    return GraphSpec(family="torus", m=m, d=d)


def lattice(d: int) -> GraphSpec:
    if d < 1:
        raise InvalidSpecError("lattice needs d >= 1")
    return GraphSpec(family="lattice", d=d)


def hypercube(d: int) -> GraphSpec:
    if d < 2:
        raise InvalidSpecError("hypercube needs d >= 2 (degree must be >= 2)")
    return GraphSpec(family="hypercube", d=d)


def complete(m: int) -> GraphSpec:
    if m < 3:
        raise InvalidSpecError("complete needs m >= 3")
    return GraphSpec(family="complete", m=m)


def custom(adjacency: Sequence[Sequence[int]]) -> GraphSpec:
    """Custom finite graph from an adjacency list; must be regular and connected."""
    n = len(adjacency)
    if n < 2:
        raise InvalidSpecError("custom graph needs at least 2 vertices")
    rows = []
    for v, nbrs in enumerate(adjacency):
        nbrs = sorted(int(w) for w in nbrs)
        if any(w < 0 or w >= n for w in nbrs):
            raise InvalidVertexError(f"vertex {v} has a neighbor outside 0..{n-1}")
        if v in nbrs:
            raise InvalidSpecError(f"self-loop at vertex {v}")
        if len(set(nbrs)) != len(nbrs):
            raise InvalidSpecError(f"duplicate edge at vertex {v}")
        rows.append(tuple(nbrs))
    degrees = {len(r) for r in rows}
    if len(degrees) != 1:
        raise NonRegularGraphError(f"degrees {sorted(degrees)} are not constant")
    degree = degrees.pop()
    if degree < 2:
        raise NonRegularGraphError("degree must be >= 2")
    for v, row in enumerate(rows):
        for w in row:
            if v not in rows[w]:
                raise InvalidSpecError(f"edge {v}-{w} is not symmetric")
    # connectivity
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for w in rows[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    if len(seen) != n:
        raise InvalidSpecError("custom graph must be connected")
    return GraphSpec(family="custom", adjacency=tuple(rows))


def parse_adjacency(text: str) -> GraphSpec:
    """Parse the line-oriented edge format: one 'u v' pair per line, 0-indexed."""
    edges = set()
    max_v = -1
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"line {lineno}: expected 'u v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: vertices must be integers") from exc
        if u < 0 or v < 0:
            raise ConfigError(f"line {lineno}: vertices must be >= 0")
        if u == v:
            raise ConfigError(f"line {lineno}: self-loop {u}")
        if (min(u, v), max(u, v)) in edges:
            raise ConfigError(f"line {lineno}: duplicate edge {u} {v}")
        edges.add((min(u, v), max(u, v)))
        max_v = max(max_v, u, v)
    if not edges:
        raise ConfigError("adjacency file contains no edges")
    adjacency = [[] for _ in range(max_v + 1)]
    for u, v in edges:
        adjacency[u].append(v)
        adjacency[v].append(u)
    return custom(adjacency)


def load_adjacency(path) -> GraphSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_adjacency(fh.read())


# ---------------------------------------------------------------------------
# walks


@dataclass(frozen=True, eq=False)
class WalkPath:
    vertices: tuple
    graph: GraphSpec
    seed: object

    @property
    def t(self) -> int:
        return len(self.vertices) - 1


def random_walk(graph: GraphSpec, start, t: int, seed) -> WalkPath:
    """Simple random walk: uniform canonical-neighbor choice each step."""
    graph.validate_vertex(start)
    draws = rng.uniform_ints(seed, t, graph.degree)
    vertices = [start]
    v = start
    for k in range(t):
        v = graph.neighbors(v)[int(draws[k])]
        vertices.append(v)
    return WalkPath(vertices=tuple(vertices), graph=graph, seed=seed)


def walk_terminals(graph: GraphSpec, start, draws: np.ndarray):
    """Vectorized terminal positions for a (B, t) matrix of neighbor draws.

    Returns per-family representations: ints for cycle/hypercube/complete and
    custom (vertex indices), an integer coordinate array (B, d) for torus and
    lattice.  Row b follows exactly the moves random_walk makes from the same
    draw sequence.
    """
    graph.validate_vertex(start)
    draws = np.asarray(draws)
    B, t = draws.shape
    fam = graph.family
    if fam == "cycle":
        steps = 1 - 2 * (draws & 1)
        return (start + steps.sum(axis=1)) % graph.m
    if fam in ("torus", "lattice"):
        coord = draws >> 1
        sign = (1 - 2 * (draws & 1)).astype(np.int8)
        disp = np.empty((B, graph.d), dtype=np.int64)
        for c in range(graph.d):
            disp[:, c] = (sign * (coord == c)).sum(axis=1)
        pos = disp + np.asarray(start, dtype=np.int64)[None, :]
        if fam == "torus":
            pos %= graph.m
        return pos
    if fam == "hypercube":
        pos = np.full(B, start, dtype=np.int64)
        for j in range(graph.d):
            parity = ((draws == j).sum(axis=1) & 1).astype(np.int64)
            pos ^= parity << j
        return pos
    if fam == "complete":
        pos = np.full(B, start, dtype=np.int64)
        for k in range(t):
            col = draws[:, k]
            pos = np.where(col < pos, col, col + 1)
        return pos
    # custom
    table = graph.neighbor_index_table()
    pos = np.full(B, graph.vertex_index(start), dtype=np.int64)
    for k in range(t):
        pos = table[pos, draws[:, k]]
    return pos


def _bfs_distances(graph: GraphSpec, start) -> np.ndarray:
    n = graph.num_vertices
    dist = np.full(n, -1, dtype=np.int64)
    s = graph.vertex_index(start)
    dist[s] = 0
    queue = deque([s])
    table = graph.neighbor_index_table()
    while queue:
        v = queue.popleft()
        for w in table[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(int(w))
    return dist


def terminal_graph_distances(graph: GraphSpec, start, terminals) -> np.ndarray:
    """Graph distances dist(terminal, start), vectorized over replicas."""
    fam = graph.family
    if fam == "cycle":
        delta = (np.asarray(terminals) - start) % graph.m
        return np.minimum(delta, graph.m - delta)
    if fam == "torus":
        delta = (np.asarray(terminals) - np.asarray(start)[None, :]) % graph.m
        return np.minimum(delta, graph.m - delta).sum(axis=1)
    if fam == "lattice":
        delta = np.asarray(terminals) - np.asarray(start)[None, :]
        return np.abs(delta).sum(axis=1)
    if fam == "hypercube":
        return np.bitwise_count(np.asarray(terminals, dtype=np.uint64) ^ np.uint64(start)).astype(
            np.int64
        )
    if fam == "complete":
        return (np.asarray(terminals) != start).astype(np.int64)
    dist = _bfs_distances(graph, start)
    return dist[np.asarray(terminals)]


def terminal_vertex_indices(graph: GraphSpec, terminals) -> np.ndarray:
    """Map walk_terminals output to canonical vertex indices (finite graphs)."""
    if graph.family == "torus":
        terminals = np.asarray(terminals)
        idx = np.zeros(terminals.shape[0], dtype=np.int64)
        for c in range(graph.d):
            idx = idx * graph.m + terminals[:, c]
        return idx
    return np.asarray(terminals, dtype=np.int64)


def graph_distance(graph: GraphSpec, u, v) -> int:
    """Shortest-path distance; closed form per family, BFS for custom."""
    graph.validate_vertex(u)
    graph.validate_vertex(v)
    fam = graph.family
    if fam == "cycle":
        delta = abs(u - v)
        return min(delta, graph.m - delta)
    if fam == "torus":
        total = 0
        for a, b in zip(u, v):
            delta = abs(int(a) - int(b))
            total += min(delta, graph.m - delta)
        return total
    if fam == "lattice":
        return int(sum(abs(int(a) - int(b)) for a, b in zip(u, v)))
    if fam == "hypercube":
        return int(bin(u ^ v).count("1"))
    if fam == "complete":
        return int(u != v)
    return int(_bfs_distances(graph, u)[graph.vertex_index(v)])


# ---------------------------------------------------------------------------
# spectral embeddings


@dataclass(frozen=True, eq=False)
class SpectralEmbedding:
    """Map each vertex into R^D via the top nontrivial eigenspace of P.

    The D coordinates are an orthonormal eigenbasis at the second-largest
    transition eigenvalue lambda2, scaled by sqrt(n / (D (1 - lambda2^2)))
    so that the one-step identity

        (1/d) sum_{v ~ u} |lambda2 Psi(u) - Psi(v)|^2 = 1

    holds at every vertex, which is the normalization under which
    lambda2^{-t} Psi(Z_t) is a martingale with unit base variance.
    """

    graph: GraphSpec
    lambda2: float
    dim: int
    table: np.ndarray  # (n_vertices, dim)
    scale: float

    def psi(self, vertex) -> np.ndarray:
        return self.table[self.graph.vertex_index(vertex)]

    @property
    def horizon(self) -> int:
        return math.ceil(1.0 / (1.0 - self.lambda2))

    def eigen_residual(self) -> float:
        P = self.graph.transition_matrix()
        res = P @ self.table - self.lambda2 * self.table
        return float(np.max(np.linalg.norm(res, axis=0))) if res.size else 0.0

    def one_step_values(self) -> np.ndarray:
        """Per-vertex (1/d) sum over neighbors of |lambda2 Psi(u) - Psi(v)|^2."""
        table = self.graph.neighbor_index_table()
        acc = np.zeros(self.table.shape[0])
        for j in range(table.shape[1]):
            diff = self.lambda2 * self.table - self.table[table[:, j]]
            acc += np.einsum("nd,nd->n", diff, diff)
        return acc / self.graph.degree


@dataclass(frozen=True)
class DegenerateSpectralGap:
    """Flagged result when lambda2 < 1/2 (the finite-graph bound is vacuous)."""

    lambda2: float
    degenerate: bool = True


def spectral_embedding(graph: GraphSpec) -> Union[SpectralEmbedding, DegenerateSpectralGap]:
    """Second-eigenvalue embedding of a finite vertex-transitive graph.

    Returns DegenerateSpectralGap when the second-largest transition
    eigenvalue is below 1/2.  Raises embedding-not-homogeneous when the
    per-vertex one-step identity fails (the graph was not vertex-transitive).
    """
    if not graph.is_finite:
        raise InvalidSpecError("spectral embeddings need a finite graph")
    P = graph.transition_matrix()
    w, V = np.linalg.eigh(P)
    order = np.argsort(w)[::-1]
    w = w[order]
    V = V[:, order]
    top = w[0]
    rest = np.flatnonzero(w < top - EIGEN_GROUP_TOL)
    if rest.size == 0:
        raise InvalidSpecError("transition matrix has no nontrivial eigenvalue")
    lam = float(w[rest[0]])
    if lam < 0.5:
        return DegenerateSpectralGap(lambda2=lam)
    members = np.flatnonzero(np.abs(w - lam) <= EIGEN_GROUP_TOL)
    basis = V[:, members]
    residual = float(np.max(np.linalg.norm(P @ basis - lam * basis, axis=0)))
    if residual > EIGEN_RESIDUAL_TOL:
        raise NotAnEigenfunctionError(f"eigen residual {residual} above {EIGEN_RESIDUAL_TOL}")
    n = graph.num_vertices
    D = basis.shape[1]
    scale = math.sqrt(n / (D * (1.0 - lam * lam)))
    emb = SpectralEmbedding(graph=graph, lambda2=lam, dim=D, table=scale * basis, scale=scale)
    deviation = float(np.max(np.abs(emb.one_step_values() - 1.0)))
    if deviation > IDENTITY_TOL:
        raise EmbeddingNotHomogeneousError(
            f"per-vertex one-step identity off by {deviation}; graph is not vertex-transitive"
        )
    return emb


def eigexpand_check(psi, lam: float, graph: GraphSpec) -> float:
    """sum_u (1/d) sum_{v~u} |lam psi(u) - psi(v)|^2 for a normalized eigenfunction.

    Equals 1 - lam^2 when psi is a unit-norm eigenfunction at eigenvalue lam.
    """
    if not graph.is_finite:
        raise InvalidSpecError("eigexpand_check needs a finite graph")
    psi = np.asarray(psi, dtype=np.float64)
    n = graph.num_vertices
    if psi.shape != (n,):
        raise InvalidSpecError(f"psi must have one entry per vertex ({n})")
    total = float(psi @ psi)
    if abs(total - 1.0) > 1e-9:
        raise InvalidSpecError(f"psi must have unit norm-squared, got {total}")
    P = graph.transition_matrix()
    residual = float(np.linalg.norm(P @ psi - lam * psi))
    if residual > IDENTITY_TOL:
        raise NotAnEigenfunctionError(f"|P psi - lam psi| = {residual} above {IDENTITY_TOL}")
    table = graph.neighbor_index_table()
    acc = 0.0
    for j in range(table.shape[1]):
        diff = lam * psi - psi[table[:, j]]
        acc += float(diff @ diff)
    return acc / graph.degree


# ---------------------------------------------------------------------------
# walk-to-martingale embeddings


@dataclass(frozen=True)
class LatticeEmbedding:
    """Identity embedding of Z^d: unit steps, Lipschitz 1, harmonic coordinates."""

    d: int

    def psi(self, vertex) -> np.ndarray:
        return np.asarray(vertex, dtype=np.float64)

    def harmonic_deviation(self, vertex) -> float:
        g = lattice(self.d)
        nbrs = np.array([self.psi(w) for w in g.neighbors(tuple(vertex))])
        return float(np.linalg.norm(nbrs.mean(axis=0) - self.psi(vertex)))


def lattice_embedding(d: int) -> LatticeEmbedding:
    if d < 1:
        raise InvalidSpecError("lattice embedding needs d >= 1")
    return LatticeEmbedding(d=d)


def embedded_schedule(embedding: SpectralEmbedding, t: int) -> VarianceSchedule:
    """Variance schedule lambda2^{-2k} of the embedded martingale, k = 1..t."""
    lam = embedding.lambda2
    return VarianceSchedule(lam ** (-2.0 * np.arange(1, t + 1)))


def lipschitz_constant(embedding, graph: GraphSpec, t_horizon: int) -> float:
    """max over edges {u, v} and 0 <= t <= t_horizon of |lam^{-t-1} Psi(u) - lam^{-t} Psi(v)|."""
    if isinstance(embedding, LatticeEmbedding):
        return 1.0
    lam = embedding.lambda2
    table = graph.neighbor_index_table()
    worst = 0.0
    for j in range(table.shape[1]):
        diff = embedding.table / lam - embedding.table[table[:, j]]
        worst = max(worst, float(np.max(np.einsum("nd,nd->n", diff, diff))))
    return math.sqrt(worst) * lam ** (-t_horizon)


def martingale_identity_residual(embedding: SpectralEmbedding, t: int = 0) -> float:
    """max_u |E[lam^{-t-1} Psi(Z_{t+1}) | Z_t = u] - lam^{-t} Psi(u)| via P."""
    lam = embedding.lambda2
    P = embedding.graph.transition_matrix()
    res = P @ embedding.table - lam * embedding.table
    return float(np.max(np.linalg.norm(res, axis=1))) * lam ** (-(t + 1))


def embedded_martingale(graph: GraphSpec, embedding, walk: WalkPath) -> PathSample:
    """The martingale path X_t = lam^{-t} Psi(Z_t) read off a walk.

    For finite graphs the construction is only a bounded-increment martingale
    while t <= ceil(1/(1 - lambda2)); longer walks raise horizon-exceeded.
    Lattice identity embeddings have no horizon.
    """
    if walk.graph != graph:
        raise InvalidSpecError("walk was generated on a different graph")
    t = walk.t
    if isinstance(embedding, LatticeEmbedding):
        points = np.array([embedding.psi(v) for v in walk.vertices], dtype=np.float64)
        spec = MartingaleSpec(
            L=1.0,
            schedule=VarianceSchedule.constant(1.0, t),
            controller=None,
            x0=points[0],
            dim=embedding.d,
        )
        return PathSample(points=points, spec=spec, seed=walk.seed)
    horizon = embedding.horizon
    if t > horizon:
        raise HorizonExceededError(f"walk length {t} exceeds horizon {horizon}")
    lam = embedding.lambda2
    powers = lam ** (-np.arange(t + 1, dtype=np.float64))
    rows = np.array([embedding.psi(v) for v in walk.vertices])
    points = powers[:, None] * rows
    spec = MartingaleSpec(
        L=lipschitz_constant(embedding, graph, horizon),
        schedule=embedded_schedule(embedding, t),
        controller=None,
        x0=points[0],
        dim=embedding.dim,
    )
    return PathSample(points=points, spec=spec, seed=walk.seed)
