"""Finite simple graphs: construction, components, roots and balls.

Graphs are stored as immutable CSR arrays (indptr/indices) with every
adjacency list sorted, so two graphs built from the same edge set are
identical bit for bit whatever order the edges arrived in.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

import config
from business.seeding import TAG_GRAPH, TAG_ROOT, make_rng
from business.validators import ValidationError, validate_natural, validate_probability, validate_seed

logger = logging.getLogger(__name__)


class GraphError(ValidationError):
    pass


class SizeCapError(ValidationError):
    pass


def _check_cap(count: int, max_vertices: int | None, what: str) -> None:
    cap = config.MAX_VERTICES if max_vertices is None else max_vertices
    if count > cap:
        raise SizeCapError(f"{what} would have {count} vertices, above the cap of {cap}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.int64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    vertex_count: int
    indptr: np.ndarray
    indices: np.ndarray
    erased: bool = False  # configuration model fell back to erasure

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]], erased: bool = False) -> "Graph":
        n = validate_natural(n, "vertex_count")
        arr = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if arr.size:
            if arr.min() < 0 or arr.max() >= n:
                raise GraphError(f"edge endpoint outside 0..{n - 1}")
            if np.any(arr[:, 0] == arr[:, 1]):
                raise GraphError("self-loops are not allowed")
            lo = np.minimum(arr[:, 0], arr[:, 1])
            hi = np.maximum(arr[:, 0], arr[:, 1])
            if np.unique(lo * n + hi).size != lo.size:
                raise GraphError("duplicate edges are not allowed")
        else:
            lo = hi = np.empty(0, dtype=np.int64)
        return cls._from_pairs(n, lo, hi, erased=erased)

    @classmethod
    def _from_pairs(cls, n: int, u: np.ndarray, v: np.ndarray, erased: bool = False) -> "Graph":
        # Caller guarantees a simple edge set.
        rows = np.concatenate([u, v]).astype(np.int64)
        cols = np.concatenate([v, u]).astype(np.int64)
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return cls(n, _frozen(indptr), _frozen(cols), erased)

    @classmethod
    def _from_csr(cls, m: sparse.csr_matrix, erased: bool = False) -> "Graph":
        m = m.tocsr()
        m.sort_indices()
        return cls(m.shape[0], _frozen(m.indptr), _frozen(m.indices), erased)

    @property
    def edge_count(self) -> int:
        return int(self.indices.size // 2)

    @cached_property
    def adjacency(self) -> list[list[int]]:
        flat = self.indices.tolist()
        bounds = self.indptr.tolist()
        return [flat[bounds[v]:bounds[v + 1]] for v in range(self.vertex_count)]

    @cached_property
    def padded_adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """(n, max degree) neighbour table and its validity mask; padding entries are 0."""
        deg = self.degrees()
        width = max(int(deg.max()) if self.vertex_count else 0, 1)
        slot = np.arange(width)[None, :]
        mask = slot < deg[:, None]
        table = np.zeros((self.vertex_count, width), dtype=np.int64)
        table[mask] = self.indices
        table.setflags(write=False)
        mask.setflags(write=False)
        return table, mask

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edges(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.vertex_count, dtype=np.int64), self.degrees())
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def to_csr(self) -> sparse.csr_matrix:
        data = np.ones(self.indices.size, dtype=np.float64)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.vertex_count, self.vertex_count))

    def induced(self, vertices: np.ndarray) -> "Graph":
        """Induced subgraph; vertex i of the result is the i-th smallest of `vertices`."""
        vertices = np.unique(np.asarray(vertices, dtype=np.int64))
        if vertices.size == 0:
            return Graph(0, _frozen(np.zeros(1)), _frozen(np.empty(0)), self.erased)
        starts = self.indptr[vertices]
        counts = self.indptr[vertices + 1] - starts
        total = int(counts.sum())
        row_start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        flat = np.repeat(starts - row_start, counts) + np.arange(total, dtype=np.int64)
        rows = np.repeat(np.arange(vertices.size, dtype=np.int64), counts)
        cols = self.indices[flat]
        pos = np.searchsorted(vertices, cols)
        keep = pos < vertices.size
        keep[keep] = vertices[pos[keep]] == cols[keep]
        # rows stay grouped and the relabelling is monotone, so CSR order is preserved
        rows, pos = rows[keep], pos[keep]
        indptr = np.zeros(vertices.size + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=vertices.size), out=indptr[1:])
        return Graph(int(vertices.size), _frozen(indptr), _frozen(pos), self.erased)

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Graph in which vertex v is renamed perm[v]."""
        perm = np.asarray(perm, dtype=np.int64)
        if perm.shape != (self.vertex_count,) or not np.array_equal(np.sort(perm), np.arange(self.vertex_count)):
            raise GraphError("relabel needs a permutation of the vertex set")
        e = self.edges()
        return Graph._from_pairs(self.vertex_count, perm[e[:, 0]], perm[e[:, 1]], erased=self.erased)

    def same_as(self, other: "Graph") -> bool:
        return (
            self.vertex_count == other.vertex_count
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )


@dataclass(frozen=True, eq=False)
class RootedGraph:
    graph: Graph
    root: int
    back_map: np.ndarray | None = None  # vertex index in the source graph
    truncated: bool = False  # tree sampler hit its vertex budget

    def __post_init__(self) -> None:
        n = self.graph.vertex_count
        if n < 1 or not 0 <= self.root < n:
            raise GraphError(f"root {self.root} is not a vertex of a {n}-vertex graph")
        if n > 1:
            count, _ = csgraph.connected_components(self.graph.to_csr(), directed=False)
            if count != 1:
                raise GraphError("a rooted graph must be connected")
        if self.back_map is not None:
            object.__setattr__(self, "back_map", _frozen(self.back_map))

    @property
    def vertex_count(self) -> int:
        return self.graph.vertex_count

    def original(self, v: int) -> int:
        return int(v) if self.back_map is None else int(self.back_map[v])


@dataclass(frozen=True, eq=False)
class LatticeBox(RootedGraph):
    dim: int = 1
    radius: int = 0

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    def index_of(self, coords: Sequence[int]) -> int:
        shifted = tuple(int(c) + self.radius for c in coords)
        return int(np.ravel_multi_index(shifted, (self.side,) * self.dim))

    def coordinates(self, v: int) -> tuple[int, ...]:
        return tuple(int(c) - self.radius for c in np.unravel_index(int(v), (self.side,) * self.dim))


@dataclass(frozen=True, eq=False)
class CanopyTree(RootedGraph):
    d: int = 3
    levels: int = 1
    base_width: int = 1
    root_level: int = 0

    def level_widths(self) -> list[int]:
        return [self.base_width * (self.d - 1) ** (self.levels - i) for i in range(self.levels + 1)]

    def position(self, v: int) -> tuple[int, int]:
        offsets = np.concatenate([[0], np.cumsum(self.level_widths())])
        flat = self.original(v)
        i = int(np.searchsorted(offsets, flat, side="right") - 1)
        return i, int(flat - offsets[i])


@dataclass(frozen=True, eq=False)
class MarkedGraph:
    rooted: RootedGraph
    marks: np.ndarray

    def __post_init__(self) -> None:
        marks = np.asarray(self.marks)
        if marks.shape[0] != self.rooted.vertex_count:
            raise GraphError(f"{marks.shape[0]} marks for {self.rooted.vertex_count} vertices")
        if marks.ndim not in (1, 2):
            raise GraphError("marks must be one symbol or one vector per vertex")
        object.__setattr__(self, "marks", marks)

    @property
    def kind(self) -> str:
        return "discrete" if np.issubdtype(self.marks.dtype, np.integer) else "vector"

    @property
    def graph(self) -> Graph:
        return self.rooted.graph


# --- Random graphs ---

def _pair_count(n: int) -> int:
    return n * (n - 1) // 2


def _unrank_pairs(ranks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map ranks in [0, n(n-1)/2) to pairs (v, u) with v < u, ordered by (u, v)."""
    ranks = np.asarray(ranks, dtype=np.int64)
    u = np.floor((1.0 + np.sqrt(1.0 + 8.0 * ranks.astype(np.float64))) / 2.0).astype(np.int64)
    # float sqrt can be off by one near perfect squares
    u = np.where(u * (u - 1) // 2 > ranks, u - 1, u)
    u = np.where((u + 1) * u // 2 <= ranks, u + 1, u)
    v = ranks - u * (u - 1) // 2
    return v, u


def _sample_pairs(n: int, m: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    ranks = np.sort(rng.choice(_pair_count(n), size=m, replace=False)) if m else np.empty(0, dtype=np.int64)
    return _unrank_pairs(ranks)


def gen_erdos_renyi(n: int, p: float, seed: int, max_vertices: int | None = None) -> Graph:
    n = validate_natural(n, "n", minimum=1)
    p = validate_probability(p)
    validate_seed(seed)
    _check_cap(n, max_vertices, "G(n, p)")
    rng = make_rng(seed, TAG_GRAPH, 0)
    # Given its edge count, G(n, p) is uniform over edge sets of that size.
    m = int(rng.binomial(_pair_count(n), p)) if n > 1 else 0
    u, v = _sample_pairs(n, m, rng)
    logger.debug("G(%d, %g): %d edges", n, p, m)
    return Graph._from_pairs(n, u, v)


def gen_gnm(n: int, m: int, seed: int, max_vertices: int | None = None) -> Graph:
    n = validate_natural(n, "n", minimum=1)
    m = validate_natural(m, "m")
    validate_seed(seed)
    _check_cap(n, max_vertices, "G(n, m)")
    if m > _pair_count(n):
        raise GraphError(f"m={m} exceeds the {_pair_count(n)} possible edges on {n} vertices")
    u, v = _sample_pairs(n, m, make_rng(seed, TAG_GRAPH, 1))
    return Graph._from_pairs(n, u, v)


def gen_configuration_model(
    degrees: Sequence[int],
    seed: int,
    max_attempts: int | None = None,
    max_vertices: int | None = None,
) -> Graph:
    deg = np.asarray([validate_natural(d, "degree") for d in degrees], dtype=np.int64)
    n = deg.size
    if n < 1:
        raise GraphError("degree sequence must be nonempty")
    validate_seed(seed)
    _check_cap(n, max_vertices, "configuration model")
    if int(deg.sum()) % 2:
        raise GraphError(f"degree sum {int(deg.sum())} is odd")
    if np.any(deg >= n):
        raise GraphError("every degree must be < n for a simple graph")
    attempts = config.CONFIG_MODEL_MAX_ATTEMPTS if max_attempts is None else max_attempts
    rng = make_rng(seed, TAG_GRAPH, 2)
    stubs = np.repeat(np.arange(n, dtype=np.int64), deg)

    lo = hi = np.empty(0, dtype=np.int64)
    for attempt in range(max(1, attempts)):
        pairs = rng.permutation(stubs).reshape(-1, 2)
        lo = pairs.min(axis=1)
        hi = pairs.max(axis=1)
        if np.any(lo == hi):
            continue
        if np.unique(lo * n + hi).size != lo.size:
            continue
        logger.debug("configuration model simple after %d attempt(s)", attempt + 1)
        return Graph._from_pairs(n, lo, hi)

    # Erased model: drop self-loops, collapse multi-edges.
    keep = lo != hi
    keys = np.unique(lo[keep] * n + hi[keep])
    logger.warning("configuration model not simple after %d attempts; using the erased model", attempts)
    return Graph._from_pairs(n, keys // n, keys % n, erased=True)


def gen_random_regular(n: int, k: int, seed: int, max_attempts: int | None = None) -> Graph:
    n = validate_natural(n, "n", minimum=1)
    k = validate_natural(k, "k")
    if (n * k) % 2:
        raise GraphError("n * k must be even")
    if k >= n:
        raise GraphError("k must be < n")
    return gen_configuration_model([k] * n, seed, max_attempts=max_attempts)


def disjoint_union(graphs: Sequence[Graph]) -> tuple[Graph, np.ndarray]:
    """Union with vertices renumbered consecutively; offsets[i] is where graphs[i] starts."""
    sizes = np.asarray([g.vertex_count for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    indptr = [np.zeros(1, dtype=np.int64)]
    indices = []
    for g, off, nnz_before in zip(graphs, offsets[:-1], _running_nnz(graphs)):
        indptr.append(g.indptr[1:] + nnz_before)
        indices.append(g.indices + off)
    flat = np.concatenate(indices) if indices else np.empty(0, dtype=np.int64)
    return Graph(int(offsets[-1]), _frozen(np.concatenate(indptr)), _frozen(flat)), offsets


def _running_nnz(graphs: Sequence[Graph]) -> list[int]:
    out, total = [], 0
    for g in graphs:
        out.append(total)
        total += int(g.indices.size)
    return out


def validate_degree_tail(degrees: Sequence[int], delta: float) -> bool:
    """True when no vertex has degree >= n^(1/4 - delta)."""
    deg = np.asarray(degrees, dtype=np.int64)
    if deg.size == 0:
        return True
    return bool(deg.max() < deg.size ** (0.25 - float(delta)))


# --- Deterministic graphs ---

def gen_lattice_box(dim: int, n: int, max_vertices: int | None = None) -> LatticeBox:
    dim = validate_natural(dim, "dim", minimum=1)
    n = validate_natural(n, "n")
    side = 2 * n + 1
    total = side**dim
    _check_cap(total, max_vertices, f"lattice box Z^{dim}_{n}")
    idx = np.arange(total, dtype=np.int64).reshape((side,) * dim)
    us, vs = [], []
    for axis in range(dim):
        us.append(np.take(idx, np.arange(side - 1), axis=axis).ravel())
        vs.append(np.take(idx, np.arange(1, side), axis=axis).ravel())
    g = Graph._from_pairs(total, np.concatenate(us), np.concatenate(vs))
    root = int(np.ravel_multi_index((n,) * dim, (side,) * dim))
    return LatticeBox(graph=g, root=root, dim=dim, radius=n)


def regular_tree_size(k: int, height: int) -> int:
    if height == 0:
        return 1
    if k == 2:
        return 2 * height + 1
    return 1 + k * ((k - 1) ** height - 1) // (k - 2)


def gen_regular_tree(k: int, height: int, max_vertices: int | None = None) -> RootedGraph:
    k = validate_natural(k, "k", minimum=2)
    height = validate_natural(height, "height")
    total = regular_tree_size(k, height)
    _check_cap(total, max_vertices, f"regular tree T^{k}_{height}")
    parents = []
    level = np.zeros(1, dtype=np.int64)
    next_id = 1
    for depth in range(height):
        branching = k if depth == 0 else k - 1
        kids = np.arange(next_id, next_id + level.size * branching, dtype=np.int64)
        parents.append((np.repeat(level, branching), kids))
        next_id += kids.size
        level = kids
    if parents:
        u = np.concatenate([p for p, _ in parents])
        v = np.concatenate([c for _, c in parents])
    else:
        u = v = np.empty(0, dtype=np.int64)
    return RootedGraph(Graph._from_pairs(total, u, v), 0)


def gen_canopy_truncation(
    d: int,
    levels: int,
    base_width: int = 1,
    root_level: int = 0,
    max_vertices: int | None = None,
) -> CanopyTree:
    """Finite piece of the d-canopy tree.

    Level i holds W_i = base_width * (d-1)^(levels-i) vertices (i, j); vertex (i, j)
    is joined to (i+1, j // (d-1)). Vertices at the top level have degree d-1, so
    dynamics run for k steps from (root_level, 0) are exact only when
    k < levels - root_level.
    """
    d = validate_natural(d, "d", minimum=3)
    levels = validate_natural(levels, "levels", minimum=1)
    base_width = validate_natural(base_width, "base_width", minimum=1)
    root_level = validate_natural(root_level, "root_level")
    if root_level > levels:
        raise GraphError(f"root_level {root_level} above the top level {levels}")
    widths = [base_width * (d - 1) ** (levels - i) for i in range(levels + 1)]
    total = sum(widths)
    _check_cap(total, max_vertices, "canopy truncation")
    offsets = np.concatenate([[0], np.cumsum(widths)]).astype(np.int64)
    us, vs = [], []
    for i in range(levels):
        j = np.arange(widths[i], dtype=np.int64)
        us.append(offsets[i] + j)
        vs.append(offsets[i + 1] + j // (d - 1))
    g = Graph._from_pairs(total, np.concatenate(us), np.concatenate(vs))
    root = int(offsets[root_level])
    shape = dict(d=d, levels=levels, base_width=base_width, root_level=root_level)
    if base_width == 1:
        return CanopyTree(graph=g, root=root, **shape)
    # base_width > 1 leaves a forest; keep the tree holding the root
    comp = component_of(g, root)
    return CanopyTree(graph=comp.graph, root=comp.root, back_map=comp.back_map, **shape)


# --- Components and balls ---

def graph_distances(g: Graph, sources: Iterable[int], limit: int | None = None) -> np.ndarray:
    """Hop distance from the nearest source; -1 where unreachable (or beyond limit)."""
    src = np.asarray(sorted({int(s) for s in sources}), dtype=np.int64)
    if src.size == 0:
        raise GraphError("at least one source vertex is required")
    if src[0] < 0 or src[-1] >= g.vertex_count:
        raise GraphError("source vertex out of range")
    if g.edge_count == 0:
        dist = np.full(g.vertex_count, -1, dtype=np.int64)
        dist[src] = 0
        return dist
    raw = csgraph.dijkstra(
        g.to_csr(),
        directed=False,
        indices=src,
        unweighted=True,
        min_only=True,
        limit=np.inf if limit is None else float(limit),
    )
    return np.where(np.isfinite(raw), raw, -1).astype(np.int64)


def _rooted_induced(g: Graph, vertices: np.ndarray, root: int, back_map: np.ndarray | None) -> RootedGraph:
    vertices = np.sort(np.asarray(vertices, dtype=np.int64))
    sub = g.induced(vertices)
    new_root = int(np.searchsorted(vertices, root))
    mapped = vertices if back_map is None else back_map[vertices]
    return RootedGraph(sub, new_root, back_map=mapped)


def component_of(g: Graph, v: int) -> RootedGraph:
    if not 0 <= v < g.vertex_count:
        raise GraphError(f"vertex {v} out of range")
    reach = csgraph.breadth_first_order(g.to_csr(), int(v), directed=False, return_predecessors=False)
    return _rooted_induced(g, reach, int(v), None)


def uniform_root_component(g: Graph, seed: int) -> RootedGraph:
    if g.vertex_count < 1:
        raise GraphError("graph has no vertices")
    v = int(make_rng(seed, TAG_ROOT).integers(g.vertex_count))
    return component_of(g, v)


def component_labels(g: Graph) -> np.ndarray:
    _, labels = csgraph.connected_components(g.to_csr(), directed=False)
    return labels.astype(np.int64)


def components(g: Graph) -> list[RootedGraph]:
    """All components, each rooted at its smallest vertex, ordered by that vertex."""
    labels = component_labels(g)
    out = []
    seen: set[int] = set()
    for v in range(g.vertex_count):
        lab = int(labels[v])
        if lab in seen:
            continue
        seen.add(lab)
        out.append(_rooted_induced(g, np.flatnonzero(labels == lab), v, None))
    return out


def largest_component(g: Graph) -> RootedGraph:
    if g.vertex_count < 1:
        raise GraphError("graph has no vertices")
    labels = component_labels(g)
    sizes = np.bincount(labels)
    min_vertex = np.full(sizes.size, g.vertex_count, dtype=np.int64)
    np.minimum.at(min_vertex, labels, np.arange(g.vertex_count, dtype=np.int64))
    candidates = np.flatnonzero(sizes == sizes.max())
    # ties go to the component with the smallest minimal vertex
    best = candidates[np.argmin(min_vertex[candidates])]
    return _rooted_induced(g, np.flatnonzero(labels == best), int(min_vertex[best]), None)


def _ball_vertices(g: Graph, v: int, k: int) -> list[int]:
    adj = g.adjacency
    seen = {v}
    frontier = [v]
    for _ in range(k):
        nxt = []
        for u in frontier:
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        if not nxt:
            break
        frontier = nxt
    return sorted(seen)


def ball(rg: RootedGraph, k: int) -> RootedGraph:
    k = validate_natural(k, "k")
    inside = _ball_vertices(rg.graph, rg.root, k)
    return _rooted_induced(rg.graph, np.asarray(inside, dtype=np.int64), rg.root, rg.back_map)


def ball_around(g: Graph, v: int, k: int) -> RootedGraph:
    """B_k(C_v(g)) without building the whole component first."""
    if not 0 <= v < g.vertex_count:
        raise GraphError(f"vertex {v} out of range")
    inside = _ball_vertices(g, int(v), validate_natural(k, "k"))
    return _rooted_induced(g, np.asarray(inside, dtype=np.int64), int(v), None)


def tree_height(rg: RootedGraph) -> int:
    dist = graph_distances(rg.graph, [rg.root])
    return int(dist.max())


def expected_giant_fraction(mean_degree: float, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Solution of s = 1 - exp(-c s) by fixed-point iteration from 1."""
    c = float(mean_degree)
    if c <= 1.0:
        return 0.0
    s = 1.0
    for _ in range(max_iter):
        nxt = 1.0 - math.exp(-c * s)
        if abs(nxt - s) < tol:
            return nxt
        s = nxt
    return s
