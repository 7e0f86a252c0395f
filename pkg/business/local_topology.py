"""Rooted isomorphism classes and local-weak-convergence diagnostics.

Trees get AHU codes (sorted recursive subtree codes). Other graphs get a
canonical adjacency encoding from colour refinement plus individualisation,
kept to small vertex counts.
"""
from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import NamedTuple

import networkx as nx
import numpy as np
from networkx.algorithms.isomorphism import GraphMatcher
from scipy import sparse
from scipy.sparse import csgraph

import config
from business.graphs import Graph, MarkedGraph, RootedGraph, ball, ball_around
from business.seeding import TAG_TREE, map_ordered, replica_seeds
from business.validators import ValidationError, validate_natural

logger = logging.getLogger(__name__)

BallCode = bytes

SINGLE_VERTEX_CODE: BallCode = b"T()"


class IsomorphismCapError(ValidationError):
    pass


class Interval(NamedTuple):
    lower: float
    upper: float


@dataclass(frozen=True)
class BallHistogram:
    counts: dict[bytes, int]
    total: int
    radius: int

    def frequencies(self) -> dict[bytes, float]:
        return {code: c / self.total for code, c in self.counts.items()}


# --- Canonical codes ---

def is_tree(g: Graph) -> bool:
    # callers pass connected graphs
    return g.edge_count == g.vertex_count - 1


def _tree_structure(rg: RootedGraph) -> tuple[list[int], list[list[int]]]:
    """BFS order and children lists of a rooted tree."""
    adj = rg.graph.adjacency
    order = [rg.root]
    parent = {rg.root: -1}
    children: list[list[int]] = [[] for _ in range(rg.vertex_count)]
    i = 0
    while i < len(order):
        u = order[i]
        i += 1
        for w in adj[u]:
            if w != parent[u]:
                parent[w] = u
                children[u].append(w)
                order.append(w)
    return order, children


def _subtree_codes(rg: RootedGraph) -> tuple[list[bytes], list[list[int]]]:
    order, children = _tree_structure(rg)
    codes: list[bytes] = [b""] * rg.vertex_count
    for u in reversed(order):
        codes[u] = b"(" + b"".join(sorted(codes[c] for c in children[u])) + b")"
    return codes, children


def _refine(adj: list[list[int]], colors: list[int]) -> list[int]:
    """Colour refinement to a stable partition; colour ids are canonical ranks."""
    while True:
        sigs = [(colors[v], tuple(sorted(colors[w] for w in adj[v]))) for v in range(len(adj))]
        ranking = {sig: r for r, sig in enumerate(sorted(set(sigs)))}
        new = [ranking[s] for s in sigs]
        if len(ranking) == len(set(colors)):
            return new
        colors = new


def _encode(adj: list[list[int]], colors: list[int]) -> bytes:
    n = len(adj)
    pos = colors  # discrete partition: colour is the canonical position
    mat = np.zeros((n, n), dtype=np.uint8)
    for v in range(n):
        for w in adj[v]:
            mat[pos[v], pos[w]] = 1
    return np.packbits(mat[np.triu_indices(n, 1)]).tobytes()


def _search(adj: list[list[int]], colors: list[int]) -> bytes:
    colors = _refine(adj, colors)
    n = len(adj)
    if len(set(colors)) == n:
        return _encode(adj, colors)
    sizes = Counter(colors)
    target = min(c for c, s in sizes.items() if s > 1)
    best: bytes | None = None
    for v in range(n):
        if colors[v] != target:
            continue
        # individualise v: it sorts ahead of the rest of its cell
        indiv = [2 * c + (0 if (u == v or c != target) else 1) for u, c in enumerate(colors)]
        code = _search(adj, indiv)
        if best is None or code < best:
            best = code
    return best  # type: ignore[return-value]


def canonical_code(rg: RootedGraph, max_vertices: int | None = None) -> BallCode:
    n = rg.vertex_count
    if is_tree(rg.graph):
        codes, _ = _subtree_codes(rg)
        return b"T" + codes[rg.root]
    cap = config.ISO_GENERAL_MAX_VERTICES if max_vertices is None else max_vertices
    if n > cap:
        raise IsomorphismCapError(f"canonical code for a non-tree needs <= {cap} vertices (got {n})")
    adj = rg.graph.adjacency
    start = [0 if v == rg.root else 1 for v in range(n)]
    return b"G" + n.to_bytes(2, "big") + _search(adj, start)


def rooted_isomorphic(a: RootedGraph, b: RootedGraph) -> bool:
    if a.vertex_count != b.vertex_count or a.graph.edge_count != b.graph.edge_count:
        return False
    return canonical_code(a) == canonical_code(b)


# --- Local metrics ---

def _unrooted(rg: RootedGraph) -> RootedGraph:
    # balls indexed by rg itself, not by rg's source graph
    return RootedGraph(rg.graph, rg.root)


def d_star_unmarked(a: RootedGraph, b: RootedGraph, k_max: int) -> Interval:
    k_max = validate_natural(k_max, "k_max")
    lower = 0.0
    for k in range(1, k_max + 1):
        if not rooted_isomorphic(ball(a, k), ball(b, k)):
            # B_k differs, so every larger ball differs too
            lower = sum(2.0**-j for j in range(k, k_max + 1))
            break
    return Interval(lower, lower + 2.0**-k_max)


def mark_distance(x: np.ndarray, y: np.ndarray) -> float:
    if np.ndim(x) == 0:
        return 0.0 if x == y else 1.0
    return float(np.linalg.norm(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)))


def _bottleneck(cost: np.ndarray) -> float:
    """min over perfect matchings of the max matched cost (square matrix, inf = forbidden)."""
    size = cost.shape[0]
    if size == 0:
        return 0.0
    finite = np.unique(cost[np.isfinite(cost)])
    lo, hi = 0, finite.size - 1
    if finite.size == 0:
        return np.inf
    best = np.inf
    while lo <= hi:
        mid = (lo + hi) // 2
        allowed = sparse.csr_matrix((cost <= finite[mid]).astype(np.int8))
        match = csgraph.maximum_bipartite_matching(allowed, perm_type="column")
        if np.all(match >= 0):
            best = float(finite[mid])
            hi = mid - 1
        else:
            lo = mid + 1
    return best


def tree_bottleneck_distance(a: RootedGraph, marks_a: np.ndarray, b: RootedGraph, marks_b: np.ndarray) -> float:
    """Exact inf over root-preserving isomorphisms of the max mark distance, for trees.

    Returns inf when the trees are not isomorphic.
    """
    codes_a, kids_a = _subtree_codes(a)
    codes_b, kids_b = _subtree_codes(b)
    if codes_a[a.root] != codes_b[b.root]:
        return np.inf
    memo: dict[tuple[int, int], float] = {}

    def cost(u: int, v: int) -> float:
        key = (u, v)
        if key in memo:
            return memo[key]
        worst = mark_distance(marks_a[u], marks_b[v])
        ca, cb = kids_a[u], kids_b[v]
        groups: dict[bytes, tuple[list[int], list[int]]] = {}
        for c in ca:
            groups.setdefault(codes_a[c], ([], []))[0].append(c)
        for c in cb:
            groups.setdefault(codes_b[c], ([], []))[1].append(c)
        for left, right in groups.values():
            m = np.array([[cost(x, y) for y in right] for x in left], dtype=np.float64)
            worst = max(worst, _bottleneck(m))
        memo[key] = worst
        return worst

    return cost(a.root, b.root)


def _nx_rooted(rg: RootedGraph) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from((v, {"root": v == rg.root}) for v in range(rg.vertex_count))
    g.add_edges_from(map(tuple, rg.graph.edges().tolist()))
    return g


def general_bottleneck_distance(
    a: RootedGraph,
    marks_a: np.ndarray,
    b: RootedGraph,
    marks_b: np.ndarray,
    max_vertices: int | None = None,
    enumeration_cap: int | None = None,
) -> float:
    cap = config.ISO_MARKED_MAX_VERTICES if max_vertices is None else max_vertices
    limit = config.ISO_ENUMERATION_CAP if enumeration_cap is None else enumeration_cap
    if max(a.vertex_count, b.vertex_count) > cap:
        raise IsomorphismCapError(f"marked isomorphism enumeration needs <= {cap} vertices")
    matcher = GraphMatcher(_nx_rooted(a), _nx_rooted(b), node_match=lambda x, y: x["root"] == y["root"])
    best = np.inf
    for count, phi in enumerate(matcher.isomorphisms_iter(), start=1):
        if count > limit:
            raise IsomorphismCapError(f"more than {limit} isomorphisms to enumerate")
        best = min(best, max(mark_distance(marks_a[u], marks_b[v]) for u, v in phi.items()))
        if best == 0.0:
            break
    return best


def d_star_marked(a: MarkedGraph, b: MarkedGraph, k_max: int) -> Interval:
    k_max = validate_natural(k_max, "k_max")
    if a.kind != b.kind:
        raise ValidationError(f"cannot compare {a.kind} marks with {b.kind} marks")
    ra, rb = _unrooted(a.rooted), _unrooted(b.rooted)
    lower = 0.0
    for k in range(1, k_max + 1):
        ba, bb = ball(ra, k), ball(rb, k)
        if not rooted_isomorphic(ba, bb):
            lower += sum(2.0**-j for j in range(k, k_max + 1))
            break
        ma, mb = a.marks[ba.back_map], b.marks[bb.back_map]
        if is_tree(ba.graph):
            dist = tree_bottleneck_distance(ba, ma, bb, mb)
        else:
            dist = general_bottleneck_distance(ba, ma, bb, mb)
        lower += 2.0**-k * min(1.0, dist)
    return Interval(lower, lower + 2.0**-k_max)


# --- Histograms ---

def histogram_from_balls(balls: Sequence[RootedGraph], radius: int) -> BallHistogram:
    counts = Counter(canonical_code(b) for b in balls)
    return BallHistogram(dict(counts), len(balls), radius)


def neighborhood_histogram(g: Graph, r: int, threads: int = 1) -> BallHistogram:
    r = validate_natural(r, "r")
    codes = map_ordered(lambda v: canonical_code(ball_around(g, v, r)), range(g.vertex_count), threads)
    return BallHistogram(dict(Counter(codes)), g.vertex_count, r)


def histogram_tv(a: BallHistogram, b: BallHistogram) -> float:
    if a.radius != b.radius:
        raise ValidationError(f"histogram radii differ ({a.radius} vs {b.radius})")
    fa, fb = a.frequencies(), b.frequencies()
    return 0.5 * sum(abs(fa.get(c, 0.0) - fb.get(c, 0.0)) for c in set(fa) | set(fb))


def sample_ball_histogram(
    limit_ball_sampler: Callable[[int], RootedGraph],
    r: int,
    n_samples: int,
    seed: int,
    threads: int = 1,
) -> BallHistogram:
    seeds = replica_seeds(seed, validate_natural(n_samples, "n_samples", minimum=1), TAG_TREE)
    codes = map_ordered(lambda s: canonical_code(ball(limit_ball_sampler(s), r)), seeds, threads)
    return BallHistogram(dict(Counter(codes)), n_samples, r)


def lw_deficiency(
    g: Graph,
    limit_ball_sampler: Callable[[int], RootedGraph],
    r: int,
    n_samples: int,
    seed: int,
    threads: int = 1,
) -> float:
    observed = neighborhood_histogram(g, r, threads)
    limit = sample_ball_histogram(limit_ball_sampler, r, n_samples, seed, threads)
    value = histogram_tv(observed, limit)
    logger.info("local weak deficiency at radius %d: %.4f (%d vertices, %d limit samples)", r, value, g.vertex_count, n_samples)
    return value


# --- Marked functional battery ---

def _battery_values(mg: MarkedGraph, radius: int) -> np.ndarray:
    marks = mg.marks.astype(np.float64)
    if marks.ndim == 1:
        marks = marks[:, None]
    dist_balls = [ball(_unrooted(mg.rooted), k) for k in range(radius + 1)]
    values = []
    for comp in range(marks.shape[1]):
        for k, b in enumerate(dist_balls):
            mean = float(marks[b.back_map, comp].mean())
            values.append(np.tanh(mean))
            if k:
                values.append(np.tanh(b.vertex_count / (1.0 + k * k)))
    return np.asarray(values)


def marked_battery_gap(
    a_samples: Sequence[MarkedGraph],
    b_samples: Sequence[MarkedGraph],
    radius: int,
) -> float:
    """Largest gap in mean over a fixed battery of bounded Lipschitz ball functionals.

    Each functional is tanh of either the mean mark (per component) over B_k or a
    scaled ball size, k = 0..radius. A finite battery cannot certify marked local
    convergence; it is a screening statistic next to the ball-type TV.
    """
    if not a_samples or not b_samples:
        raise ValidationError("battery comparison needs samples on both sides")
    va = np.mean([_battery_values(m, radius) for m in a_samples], axis=0)
    vb = np.mean([_battery_values(m, radius) for m in b_samples], axis=0)
    return float(np.max(np.abs(va - vb)))
