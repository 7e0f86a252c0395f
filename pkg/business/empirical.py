"""Empirical measures of trajectories and the Monte Carlo estimators built on them."""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

import config
from business.dynamics import (
    DecayPoint,
    DecayProfile,
    DiffusionModel,
    Model,
    TrajectorySet,
    simulate,
)
from business.graphs import (
    Graph,
    LatticeBox,
    RootedGraph,
    ball,
    component_labels,
    disjoint_union,
    gen_canopy_truncation,
    gen_lattice_box,
    largest_component,
)
from business.seeding import (
    TAG_DYNAMICS,
    TAG_GRAPH,
    TAG_MARKS,
    TAG_ROOT,
    TAG_SUBSAMPLE,
    TAG_TREE,
    derive_seed,
    make_rng,
    map_ordered,
)
from business.validators import ValidationError, validate_natural

logger = logging.getLogger(__name__)

__all__ = [
    "ComponentFunctionalSample",
    "DecayPoint",
    "DecayProfile",
    "EmpiricalMeasure",
    "LocalFunctional",
    "canopy_mixture_root_law",
    "canopy_weights",
    "component_empirical",
    "component_functional_distribution",
    "depth_sensitivity",
    "ergodicity_variance_curve",
    "fit_factorial_envelope",
    "fit_log_slope",
    "giant_fraction",
    "global_empirical",
    "lattice_root_law",
    "root_law_monte_carlo",
    "shift_average",
    "tree_functional_distribution",
    "tv_discrete",
    "wasserstein1_paths",
]

TreeSampler = Callable[[int], RootedGraph]
GraphSampler = Callable[[int], Graph]
InitSampler = Callable[[Graph, int], np.ndarray]
PathFunctional = Callable[[np.ndarray], np.ndarray]
"""Maps a stack of paths (m, L[, d]) to one real per path."""

_CHUNK = 1000


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Equal-weight mixture of point masses at the rows of `samples`."""

    samples: np.ndarray
    times: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.samples.shape[0] == 0:
            raise ValidationError("an empirical measure needs at least one sample")
        if self.samples.shape[1] != self.times.size:
            raise ValidationError("samples do not match the time grid")

    @property
    def size(self) -> int:
        return int(self.samples.shape[0])

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)

    def integrate(self, f: PathFunctional) -> float:
        return float(np.mean(f(self.samples)))

    def histogram(self) -> dict[bytes, float]:
        if self.kind != "discrete":
            raise ValidationError("histograms need finite-alphabet trajectories")
        rows, counts = np.unique(self.samples, axis=0, return_counts=True)
        return {np.ascontiguousarray(r, dtype=np.int64).tobytes(): c / self.size for r, c in zip(rows, counts)}

    @classmethod
    def concatenate(cls, parts: Sequence["EmpiricalMeasure"]) -> "EmpiricalMeasure":
        first = parts[0]
        for p in parts[1:]:
            _check_compatible(first, p)
        return cls(np.concatenate([p.samples for p in parts], axis=0), first.times, first.kind)


def _check_compatible(a: EmpiricalMeasure, b: EmpiricalMeasure) -> None:
    if a.kind != b.kind:
        raise ValidationError(f"cannot compare {a.kind} and {b.kind} trajectories")
    if not np.array_equal(a.times, b.times):
        raise ValidationError("trajectories live on different time grids")


def global_empirical(ts: TrajectorySet) -> EmpiricalMeasure:
    return EmpiricalMeasure(ts.paths, ts.times, ts.kind)


def component_empirical(ts: TrajectorySet, comp: RootedGraph) -> EmpiricalMeasure:
    n = ts.vertex_count
    vertices = np.arange(comp.vertex_count) if comp.back_map is None else comp.back_map
    if vertices.size and (vertices.min() < 0 or vertices.max() >= n):
        raise ValidationError("component vertices do not belong to the trajectory graph")
    labels = component_labels(ts.graph)
    lab = labels[vertices]
    if np.any(lab != lab[0]) or int((labels == lab[0]).sum()) != vertices.size:
        raise ValidationError("the rooted graph is not a connected component of the trajectory graph")
    return EmpiricalMeasure(ts.paths[vertices], ts.times, ts.kind)


def tv_discrete(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    _check_compatible(a, b)
    if a.kind != "discrete":
        raise ValidationError("tv_discrete needs finite-alphabet trajectories")
    stacked = np.concatenate([a.samples, b.samples], axis=0)
    rows, inverse = np.unique(stacked, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    pa = np.bincount(inverse[: a.size], minlength=rows.shape[0]) / a.size
    pb = np.bincount(inverse[a.size :], minlength=rows.shape[0]) / b.size
    return float(min(1.0, 0.5 * np.abs(pa - pb).sum()))


def _sup_cost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """cost[i, j] = max over grid points of |a_i(s) - b_j(s)|."""
    cost = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        diff = b - a[i][None]
        cost[i] = np.sqrt((diff**2).sum(axis=-1)).max(axis=-1)
    return cost


def wasserstein1_paths(
    a: EmpiricalMeasure,
    b: EmpiricalMeasure,
    t: float,
    seed: int,
    max_samples: int | None = None,
) -> float:
    """Exact W1 between equal-size subsamples under the sup-norm on [0, t]."""
    _check_compatible(a, b)
    if a.kind != "vector":
        raise ValidationError("wasserstein1_paths needs real-valued trajectories")
    cap = config.W1_MAX_SAMPLES if max_samples is None else validate_natural(max_samples, "max_samples")
    m = min(cap, a.size, b.size)
    if m == 0:
        raise ValidationError("nothing left to compare after subsampling")
    window = a.times <= t + 1e-12
    if not window.any():
        raise ValidationError(f"no grid point in [0, {t}]")
    # both sides draw their subsample from the same stream, so identical inputs match exactly
    pick_a = np.sort(make_rng(seed, TAG_SUBSAMPLE).choice(a.size, size=m, replace=False))
    pick_b = np.sort(make_rng(seed, TAG_SUBSAMPLE).choice(b.size, size=m, replace=False))
    xa = a.samples[pick_a][:, window]
    xb = b.samples[pick_b][:, window]
    if xa.ndim == 2:
        xa, xb = xa[..., None], xb[..., None]
    cost = _sup_cost(xa, xb)
    rows, cols = optimize.linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


# --- limit-law Monte Carlo ---

def _root_chunk(
    start: int,
    stop: int,
    tree_sampler: TreeSampler,
    init_sampler: InitSampler,
    model: Model,
    horizon: float,
    seed: int,
    dt: float | None,
) -> tuple[np.ndarray, np.ndarray, int]:
    trees = [tree_sampler(derive_seed(seed, TAG_TREE, r)) for r in range(start, stop)]
    marks = [np.asarray(init_sampler(t.graph, derive_seed(seed, TAG_MARKS, r))) for t, r in zip(trees, range(start, stop))]
    union, offsets = disjoint_union([t.graph for t in trees])
    roots = offsets[:-1] + np.asarray([t.root for t in trees], dtype=np.int64)
    ts = simulate(union, np.concatenate(marks, axis=0), model, horizon, seed=derive_seed(seed, TAG_DYNAMICS, start), dt=dt)
    truncated = sum(1 for t in trees if t.truncated)
    return ts.paths[roots], ts.times, truncated


def root_law_monte_carlo(
    tree_sampler: TreeSampler,
    init_sampler: InitSampler,
    model: Model,
    horizon: float,
    replicas: int,
    seed: int,
    dt: float | None = None,
    depth: int | None = None,
    threads: int = 1,
) -> EmpiricalMeasure:
    """Root trajectories of `replicas` independent (tree, marks, dynamics) draws.

    Replicas are simulated in fixed-size blocks as one disjoint union per
    block; the noise of a block depends only on its first replica index.
    """
    replicas = validate_natural(replicas, "replicas", minimum=1)
    if depth is not None and not isinstance(model, DiffusionModel) and depth < horizon:
        raise ValidationError(f"tree depth {depth} is below the horizon {horizon}; the root law would be truncated")
    blocks = [(s, min(s + _CHUNK, replicas)) for s in range(0, replicas, _CHUNK)]
    results = map_ordered(
        lambda b: _root_chunk(b[0], b[1], tree_sampler, init_sampler, model, horizon, seed, dt), blocks, threads
    )
    truncated = sum(r[2] for r in results)
    if truncated:
        logger.warning("%d of %d sampled trees hit the vertex budget", truncated, replicas)
    samples = np.concatenate([r[0] for r in results], axis=0)
    return EmpiricalMeasure(samples, results[0][1], model.kind)


def depth_sensitivity(
    sampler_at_depth: Callable[[int], TreeSampler],
    depth: int,
    init_sampler: InitSampler,
    model: DiffusionModel,
    horizon: float,
    replicas: int,
    seed: int,
    dt: float,
    max_samples: int | None = None,
    threads: int = 1,
) -> float:
    """W1 shift of a diffusion root law when the tree depth goes from D to D + 2."""
    base = root_law_monte_carlo(sampler_at_depth(depth), init_sampler, model, horizon, replicas, seed, dt=dt, threads=threads)
    deeper = root_law_monte_carlo(sampler_at_depth(depth + 2), init_sampler, model, horizon, replicas, seed, dt=dt, threads=threads)
    shift = wasserstein1_paths(base, deeper, horizon, seed, max_samples=max_samples)
    logger.info("depth %d -> %d changes the root law by W1 = %.4g", depth, depth + 2, shift)
    return shift


def lattice_root_law(
    dim: int,
    init_sampler: InitSampler,
    model: Model,
    horizon: int,
    replicas: int,
    seed: int,
    threads: int = 1,
) -> EmpiricalMeasure:
    """Law of the origin's trajectory on Z^dim, exact for discrete models via the radius-horizon box."""
    box = gen_lattice_box(dim, int(horizon))
    rooted = RootedGraph(box.graph, box.root)
    return root_law_monte_carlo(lambda _seed: rooted, init_sampler, model, horizon, replicas, seed,
                                depth=int(horizon), threads=threads)


def canopy_weights(d: int, max_level: int) -> np.ndarray:
    """(d-2)/(d-1)^(i+1) for i = 0..max_level, renormalised."""
    if d < 3:
        raise ValidationError("canopy trees need d >= 3")
    i = np.arange(max_level + 1, dtype=np.float64)
    w = (d - 2) / float(d - 1) ** (i + 1)
    return w / w.sum()


def _stratified_counts(weights: np.ndarray, total: int) -> np.ndarray:
    raw = weights * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short:
        # largest remainders first, ties to the lower level
        order = np.lexsort((np.arange(raw.size), -(raw - counts)))
        counts[order[:short]] += 1
    return counts


def canopy_mixture_root_law(
    d: int,
    init_sampler: InitSampler,
    model: Model,
    horizon: int,
    replicas: int,
    seed: int,
    max_level: int = 10,
    threads: int = 1,
) -> EmpiricalMeasure:
    """Mixture over canopy levels i <= max_level of the law of the trajectory at (i, 0).

    Replicas are split across levels by stratified allocation; the level-i
    part is exact because the radius-horizon ball around (i, 0) fits inside
    a truncation with i + horizon + 1 levels.
    """
    counts = _stratified_counts(canopy_weights(d, max_level), validate_natural(replicas, "replicas", minimum=1))
    parts = []
    for level, count in enumerate(counts.tolist()):
        if count == 0:
            continue
        canopy = gen_canopy_truncation(d, level + int(horizon) + 1, root_level=level)
        local = ball(canopy, int(horizon))
        local = RootedGraph(local.graph, local.root)
        parts.append(root_law_monte_carlo(lambda _seed, t=local: t, init_sampler, model, horizon, count,
                                          derive_seed(seed, TAG_TREE, level), depth=int(horizon), threads=threads))
    return EmpiricalMeasure.concatenate(parts)


def giant_fraction(
    graph_sampler: GraphSampler,
    n: int,
    replicas: int,
    seed: int,
    threads: int = 1,
) -> tuple[float, float]:
    replicas = validate_natural(replicas, "replicas", minimum=1)
    n = validate_natural(n, "n", minimum=1)

    def one(r: int) -> float:
        g = graph_sampler(derive_seed(seed, TAG_GRAPH, r))
        return largest_component(g).vertex_count / n

    values = np.asarray(map_ordered(one, range(replicas), threads))
    stderr = float(values.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    return float(values.mean()), stderr


@dataclass(frozen=True, eq=False)
class ComponentFunctionalSample:
    values: np.ndarray
    in_giant: np.ndarray
    component_sizes: np.ndarray

    @property
    def giant_fraction(self) -> float:
        return float(self.in_giant.mean())


def component_functional_distribution(
    graph_sampler: GraphSampler,
    init_sampler: InitSampler,
    model: Model,
    f: PathFunctional,
    horizon: float,
    root_draws: int,
    seed: int,
    dt: float | None = None,
    threads: int = 1,
) -> ComponentFunctionalSample:
    """Per draw: fresh graph and marks, simulate, then <mu^{C(root)}, f> for a uniform root."""
    root_draws = validate_natural(root_draws, "root_draws", minimum=100)

    def one(r: int) -> tuple[float, bool, int]:
        g = graph_sampler(derive_seed(seed, TAG_GRAPH, r))
        marks = init_sampler(g, derive_seed(seed, TAG_MARKS, r))
        ts = simulate(g, marks, model, horizon, seed=derive_seed(seed, TAG_DYNAMICS, r), dt=dt)
        root = int(make_rng(seed, TAG_ROOT, r).integers(g.vertex_count))
        labels = component_labels(g)
        members = np.flatnonzero(labels == labels[root])
        giant = largest_component(g)
        in_giant = bool(labels[root] == labels[giant.original(giant.root)])
        return float(np.mean(f(ts.paths[members]))), in_giant, int(members.size)

    rows = map_ordered(one, range(root_draws), threads)
    return ComponentFunctionalSample(
        np.asarray([r[0] for r in rows]),
        np.asarray([r[1] for r in rows], dtype=bool),
        np.asarray([r[2] for r in rows], dtype=np.int64),
    )


def tree_functional_distribution(
    tree_sampler: TreeSampler,
    init_sampler: InitSampler,
    model: Model,
    f: PathFunctional,
    horizon: float,
    draws: int,
    seed: int,
    dt: float | None = None,
    threads: int = 1,
) -> np.ndarray:
    """<mu^{T}, f> over whole finite trees: the limit side of the component functional."""
    draws = validate_natural(draws, "draws", minimum=1)

    def one(r: int) -> float:
        tree = tree_sampler(derive_seed(seed, TAG_TREE, r))
        if tree.truncated:
            raise ValidationError("tree sampler hit its vertex budget; the tree-side functional needs whole trees")
        marks = init_sampler(tree.graph, derive_seed(seed, TAG_MARKS, r))
        ts = simulate(tree.graph, marks, model, horizon, seed=derive_seed(seed, TAG_DYNAMICS, r), dt=dt)
        return float(np.mean(f(ts.paths)))

    return np.asarray(map_ordered(one, range(draws), threads))


# --- lattice shift averages ---

@dataclass(frozen=True)
class LocalFunctional:
    """fn maps windows[shifts, (2w+1)^dim, L[, d]] to one value per shift.

    Window sites are ordered lexicographically over offsets in [-w, w]^dim,
    so the centre sits at index ((2w+1)^dim) // 2.
    """

    radius: int
    fn: Callable[[np.ndarray], np.ndarray]


def site_state(step: int = -1) -> LocalFunctional:
    return LocalFunctional(0, lambda w: w[:, 0, step].astype(np.float64))


def window_mean(radius: int, step: int = -1) -> LocalFunctional:
    return LocalFunctional(radius, lambda w: w[:, :, step].astype(np.float64).mean(axis=1))


def _offsets(dim: int, radius: int) -> np.ndarray:
    axes = [np.arange(-radius, radius + 1)] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)


def box_shifts(dim: int, m: int) -> np.ndarray:
    """Coordinates of B_m: -floor(m/2) .. m - floor(m/2) - 1 along each axis."""
    lo = -(m // 2)
    axes = [np.arange(lo, lo + m)] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)


def shift_average(ts: TrajectorySet, box: LatticeBox, f: LocalFunctional, box_sizes: Sequence[int]) -> list[float]:
    if ts.vertex_count != box.vertex_count:
        raise ValidationError("trajectories were not simulated on this lattice box")
    offsets = _offsets(box.dim, f.radius)
    shape = (box.side,) * box.dim
    out = []
    for m in box_sizes:
        m = validate_natural(m, "box size", minimum=1)
        reach = max(m // 2, m - m // 2 - 1) + f.radius
        if reach > box.radius:
            raise ValidationError(f"box B_{m} with window {f.radius} needs radius {reach}; lattice has {box.radius}")
        sites = box_shifts(box.dim, m)[:, None, :] + offsets[None, :, :] + box.radius
        ids = np.ravel_multi_index(tuple(np.moveaxis(sites, -1, 0)), shape)
        out.append(float(np.mean(f.fn(ts.paths[ids]))))
    return out


def ergodicity_variance_curve(
    averages: Sequence[Sequence[float]],
    box_sizes: Sequence[int],
) -> list[tuple[int, float]]:
    """Cross-replica sample variance of the shift averages, per box size."""
    data = np.asarray(averages, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 20:
        raise ValidationError("at least 20 replicas of shift averages are required")
    if data.shape[1] != len(box_sizes):
        raise ValidationError("each replica needs one average per box size")
    variances = data.var(axis=0, ddof=1)
    return [(int(m), float(v)) for m, v in zip(box_sizes, variances)]


# --- fits ---

def fit_factorial_envelope(distance: int, estimate: float) -> float:
    """c with c^j / j! = |estimate| for j = ceil(distance / 2)."""
    j = math.ceil(distance / 2)
    if j < 1:
        raise ValidationError("the envelope is fitted at a positive distance")
    return (abs(estimate) * math.factorial(j)) ** (1.0 / j)


def factorial_envelope(c: float, distances: Sequence[int]) -> np.ndarray:
    return np.asarray([c ** math.ceil(d / 2) / math.factorial(math.ceil(d / 2)) for d in distances])


def fit_log_slope(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope and intercept of log y against log x."""
    lx, ly = np.log(np.asarray(x, dtype=np.float64)), np.log(np.asarray(y, dtype=np.float64))
    if not np.all(np.isfinite(ly)):
        raise ValidationError("log-slope fit needs strictly positive values")
    fit = stats.linregress(lx, ly)
    return float(fit.slope), float(fit.intercept)
