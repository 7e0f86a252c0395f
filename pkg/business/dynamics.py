"""Particle-system engines on finite graphs.

Discrete-time models update every vertex synchronously from its own recent
history, the unordered bundle of its neighbours' current states and one
uniform noise draw. Diffusions are integrated by Euler-Maruyama with one
standard Gaussian vector per (vertex, step). All noise comes from a
NoiseSource, so a trajectory is a pure function of (graph, marks, seed,
stream assignment).
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np
from scipy import stats

from business.graphs import Graph, MarkedGraph, graph_distances
from business.seeding import (
    FRESH_STREAM,
    PRIMARY_STREAM,
    TAG_REPLICA,
    NoiseSource,
    derive_seed,
    map_ordered,
)
from business.validators import (
    NumericalError,
    ValidationError,
    validate_natural,
    validate_positive,
    validate_vertex_set,
)

logger = logging.getLogger(__name__)

NeighborBundle = tuple
"""Neighbour states, sorted, so every consumer is blind to adjacency order."""


class ModelError(ValidationError):
    pass


class NonFiniteStateError(NumericalError):
    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


def neighbor_bundle(states: np.ndarray) -> NeighborBundle:
    if states.ndim == 1:
        return tuple(sorted(states.tolist()))
    return tuple(sorted(tuple(row) for row in states.tolist()))


# --- model types ---

DiscreteRule = Callable[[int, np.ndarray, NeighborBundle, float], object]
IsolatedRule = Callable[[int, np.ndarray, float], object]
BatchDiscreteRule = Callable[[int, np.ndarray, Graph, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DiscreteModel:
    """update(k, own history tail, neighbour bundle, u) -> next state.

    batch_update, when present, must agree bit for bit with update/isolated
    applied vertex by vertex; the engine prefers it.
    """

    name: str
    update: DiscreteRule
    isolated: IsolatedRule
    alphabet: tuple[int, ...] | None = None
    kind: str = "discrete"
    dimension: int = 1
    memory: int = 1
    batch_update: BatchDiscreteRule | None = None
    params: dict = field(default_factory=dict)


DriftRule = Callable[[float, np.ndarray, NeighborBundle], np.ndarray]
SigmaRule = Callable[[float, np.ndarray, NeighborBundle], np.ndarray]
BatchDrift = Callable[[float, np.ndarray, Graph], np.ndarray]
BatchNoise = Callable[[float, np.ndarray, Graph, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DiffusionModel:
    """dX_v = b(t, X_v, bundle) dt + sigma(t, X_v, bundle) dW_v.

    batch_drift(t, X[B, n, d], g) and batch_noise(t, X, g, dW) are the
    vectorised forms used by the integrator when present.
    """

    name: str
    dimension: int
    drift: DriftRule
    sigma: SigmaRule
    lipschitz: float | None = None
    batch_drift: BatchDrift | None = None
    batch_noise: BatchNoise | None = None
    params: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "vector"


Model = Union[DiscreteModel, DiffusionModel]


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """paths[v, i] is the state of v at times[i]; vector states add a trailing axis."""

    graph: Graph
    times: np.ndarray
    paths: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.paths.shape[0] != self.graph.vertex_count or self.paths.shape[1] != self.times.size:
            raise ValidationError("every vertex path must cover the whole time grid")

    @property
    def vertex_count(self) -> int:
        return self.graph.vertex_count

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def path(self, v: int) -> np.ndarray:
        return self.paths[v]

    def final_states(self) -> np.ndarray:
        return self.paths[:, -1]

    def same_as(self, other: "TrajectorySet") -> bool:
        return (
            self.kind == other.kind
            and np.array_equal(self.times, other.times)
            and self.paths.dtype == other.paths.dtype
            and np.array_equal(self.paths, other.paths)
        )


# --- inputs ---

def _unpack(g: Graph | MarkedGraph, marks: np.ndarray | None) -> tuple[Graph, np.ndarray]:
    if isinstance(g, MarkedGraph):
        return g.graph, g.marks if marks is None else np.asarray(marks)
    if marks is None:
        raise ValidationError("marks are required with a bare graph")
    return g, np.asarray(marks)


def _discrete_marks(g: Graph, marks: np.ndarray, model: DiscreteModel) -> np.ndarray:
    if model.kind == "discrete":
        if marks.shape != (g.vertex_count,) or not np.issubdtype(marks.dtype, np.integer):
            raise ModelError(f"{model.name} needs one integer mark per vertex")
        if model.alphabet is not None and not np.all(np.isin(marks, model.alphabet)):
            raise ModelError(f"marks outside the {model.name} alphabet {model.alphabet}")
        return marks.astype(np.int64)
    return _vector_marks(g, marks, model.dimension, model.name)


def _vector_marks(g: Graph, marks: np.ndarray, dimension: int, name: str) -> np.ndarray:
    if np.issubdtype(marks.dtype, np.integer):
        marks = marks.astype(np.float64)
    if not np.issubdtype(marks.dtype, np.floating):
        raise ModelError(f"{name} needs real-valued marks")
    if marks.ndim == 1 and dimension == 1:
        marks = marks[:, None]
    if marks.shape != (g.vertex_count, dimension):
        raise ModelError(f"{name} needs marks of shape ({g.vertex_count}, {dimension}), got {marks.shape}")
    if not np.all(np.isfinite(marks)):
        raise ModelError("initial marks must be finite")
    return marks.astype(np.float64)


def _noise(seed: int | None, noise: NoiseSource | None) -> NoiseSource:
    if noise is not None:
        return noise
    if seed is None:
        raise ValidationError("either a seed or a noise source is required")
    return NoiseSource(seed)


# --- discrete engine ---

def _discrete_step_generic(
    model: DiscreteModel, k: int, paths: np.ndarray, g: Graph, u: np.ndarray
) -> np.ndarray:
    adj = g.adjacency
    current = paths[:, k]
    lo = max(0, k + 1 - model.memory)
    out = np.empty_like(current)
    for v in range(g.vertex_count):
        history = paths[v, lo : k + 1]
        nbrs = adj[v]
        if nbrs:
            out[v] = model.update(k, history, neighbor_bundle(current[nbrs]), float(u[v]))
        else:
            out[v] = model.isolated(k, history, float(u[v]))
    return out


def simulate_discrete(
    g: Graph | MarkedGraph,
    marks: np.ndarray | None,
    model: DiscreteModel,
    k_max: int,
    seed: int | None = None,
    noise: NoiseSource | None = None,
) -> TrajectorySet:
    """Synchronous updates X_v(k+1) = F^k(X_v[k], bundle of X_u(k), xi_v(k+1))."""
    graph, raw = _unpack(g, marks)
    x0 = _discrete_marks(graph, raw, model)
    k_max = validate_natural(k_max, "k_max")
    source = _noise(seed, noise)
    n = graph.vertex_count
    paths = np.empty((n, k_max + 1) + x0.shape[1:], dtype=x0.dtype)
    paths[:, 0] = x0
    for k in range(k_max):
        u = source.uniforms(k + 1, n)[0, :, 0]
        if model.batch_update is not None and model.kind == "discrete":
            nxt = model.batch_update(k, paths[:, k], graph, u)
        else:
            nxt = _discrete_step_generic(model, k, paths, graph, u)
        if model.kind == "discrete" and model.alphabet is not None and not np.all(np.isin(nxt, model.alphabet)):
            raise ModelError(f"{model.name} produced a state outside its alphabet at step {k + 1}")
        paths[:, k + 1] = nxt
    return TrajectorySet(graph, np.arange(k_max + 1, dtype=np.float64), paths, model.kind)


# --- diffusion engine ---

def _time_grid(horizon: float, dt: float) -> int:
    dt = validate_positive(dt, "dt")
    horizon = validate_positive(horizon, "T")
    if horizon < dt:
        raise ValidationError(f"T={horizon} is shorter than dt={dt}")
    return int(round(horizon / dt))


def _generic_drift(model: DiffusionModel, t: float, x: np.ndarray, g: Graph) -> np.ndarray:
    adj = g.adjacency
    out = np.empty_like(x)
    for b in range(x.shape[0]):
        for v in range(g.vertex_count):
            out[b, v] = model.drift(t, x[b, v], neighbor_bundle(x[b, adj[v]]))
    return out


def _generic_noise(model: DiffusionModel, t: float, x: np.ndarray, g: Graph, dw: np.ndarray) -> np.ndarray:
    adj = g.adjacency
    out = np.empty_like(x)
    for b in range(x.shape[0]):
        for v in range(g.vertex_count):
            sigma = np.asarray(model.sigma(t, x[b, v], neighbor_bundle(x[b, adj[v]])), dtype=np.float64)
            out[b, v] = sigma.reshape(model.dimension, model.dimension) @ dw[b, v]
    return out


def integrate(
    g: Graph,
    x0: np.ndarray,
    model: DiffusionModel,
    steps: int,
    dt: float,
    noise: NoiseSource,
    stride: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Euler-Maruyama on a batch of initial states x0[B, n, d].

    Returns (recorded step indices, states[B, n, len(steps), d]); every
    `stride`-th step is kept, and so is the last one.
    """
    batch, n, d = x0.shape
    if noise.batch != batch:
        raise ValidationError(f"noise batch {noise.batch} does not match {batch} replicas")
    stride = validate_natural(stride, "stride", minimum=1)
    recorded = sorted(set(range(0, steps + 1, stride)) | {steps})
    keep = {s: i for i, s in enumerate(recorded)}
    out = np.empty((batch, n, len(recorded), d))
    x = x0.copy()
    out[:, :, 0] = x
    root_dt = np.sqrt(dt)
    drift = model.batch_drift or (lambda t, y, gr: _generic_drift(model, t, y, gr))
    diffuse = model.batch_noise or (lambda t, y, gr, dw: _generic_noise(model, t, y, gr, dw))
    for k in range(steps):
        t = k * dt
        dw = noise.normals(k + 1, n, d) * root_dt
        x = x + drift(t, x, g) * dt + diffuse(t, x, g, dw)
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError(k + 1, f"{model.name}: non-finite state at step {k + 1} (t={(k + 1) * dt:g})")
        if k + 1 in keep:
            out[:, :, keep[k + 1]] = x
    return np.asarray(recorded, dtype=np.int64), out


def simulate_diffusion(
    g: Graph | MarkedGraph,
    marks: np.ndarray | None,
    model: DiffusionModel,
    T: float,
    dt: float,
    seed: int | None = None,
    noise: NoiseSource | None = None,
    stride: int = 1,
) -> TrajectorySet:
    graph, raw = _unpack(g, marks)
    x0 = _vector_marks(graph, raw, model.dimension, model.name)
    steps = _time_grid(T, dt)
    source = _noise(seed, noise)
    if source.batch != 1:
        raise ValidationError("use simulate_diffusion_batch for batched noise")
    recorded, states = integrate(graph, x0[None], model, steps, dt, source, stride)
    return TrajectorySet(graph, recorded * dt, states[0], "vector")


def simulate_diffusion_batch(
    g: Graph,
    marks: np.ndarray,
    model: DiffusionModel,
    T: float,
    dt: float,
    noise: NoiseSource,
    stride: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """noise.batch replicas from one initial condition (n, d) or per-replica (B, n, d) marks."""
    steps = _time_grid(T, dt)
    raw = np.asarray(marks, dtype=np.float64)
    if raw.ndim == 3:
        x0 = np.stack([_vector_marks(g, m, model.dimension, model.name) for m in raw])
    else:
        x0 = np.repeat(_vector_marks(g, raw, model.dimension, model.name)[None], noise.batch, axis=0)
    recorded, states = integrate(g, x0, model, steps, dt, noise, stride)
    return recorded * dt, states


def simulate(
    g: Graph | MarkedGraph,
    marks: np.ndarray | None,
    model: Model,
    horizon: float,
    seed: int | None = None,
    noise: NoiseSource | None = None,
    dt: float | None = None,
    stride: int = 1,
) -> TrajectorySet:
    if isinstance(model, DiscreteModel):
        return simulate_discrete(g, marks, model, int(horizon), seed=seed, noise=noise)
    if dt is None:
        raise ValidationError(f"{model.name} is a diffusion; dt is required")
    return simulate_diffusion(g, marks, model, horizon, dt, seed=seed, noise=noise, stride=stride)


# --- coupling and correlation decay ---

def noise_partition(g: Graph, a1: Sequence[int], a2: Sequence[int]) -> np.ndarray:
    """Mask of vertices with d(v, A1) >= d(v, A2); unreachable counts as infinitely far."""
    a1 = validate_vertex_set(a1, g.vertex_count, "A1")
    a2 = validate_vertex_set(a2, g.vertex_count, "A2")
    d1 = graph_distances(g, a1).astype(np.float64)
    d2 = graph_distances(g, a2).astype(np.float64)
    d1[d1 < 0] = np.inf
    d2[d2 < 0] = np.inf
    return d1 >= d2


def coupled_triple(
    g: Graph,
    marks: np.ndarray,
    a1: Sequence[int],
    a2: Sequence[int],
    model: Model,
    horizon: float,
    seed: int,
    dt: float | None = None,
) -> tuple[TrajectorySet, TrajectorySet, TrajectorySet]:
    """X on W; Y fresh on {d(v,A1) >= d(v,A2)} and W elsewhere; Z the other way round."""
    side = noise_partition(g, a1, a2)
    base = NoiseSource(seed)
    y_streams = np.where(side, FRESH_STREAM, PRIMARY_STREAM)
    z_streams = np.where(side, PRIMARY_STREAM, FRESH_STREAM)
    x = simulate(g, marks, model, horizon, noise=base, dt=dt)
    y = simulate(g, marks, model, horizon, noise=base.with_streams(y_streams), dt=dt)
    z = simulate(g, marks, model, horizon, noise=base.with_streams(z_streams), dt=dt)
    return x, y, z


class DecayPoint(NamedTuple):
    distance: int
    estimate: float
    ci_half_width: float


@dataclass(frozen=True)
class DecayProfile:
    points: tuple[DecayPoint, ...]

    def __post_init__(self) -> None:
        ds = [p.distance for p in self.points]
        if any(b <= a for a, b in zip(ds, ds[1:])):
            raise ValidationError("decay profile distances must be strictly increasing")

    @property
    def distances(self) -> np.ndarray:
        return np.asarray([p.distance for p in self.points], dtype=np.int64)

    @property
    def estimates(self) -> np.ndarray:
        return np.asarray([p.estimate for p in self.points])

    @property
    def half_widths(self) -> np.ndarray:
        return np.asarray([p.ci_half_width for p in self.points])


RegionFunctional = Callable[[np.ndarray], float]


def final_mean(region_paths: np.ndarray) -> float:
    """Mean final state over a region (first component for vector states)."""
    last = region_paths[:, -1]
    return float(np.mean(last if last.ndim == 1 else last[:, 0]))


def covariance(a: np.ndarray, b: np.ndarray, confidence: float = 0.95) -> tuple[float, float]:
    """Sample covariance and a normal-approximation CI half-width."""
    centered = (a - a.mean()) * (b - b.mean())
    r = a.size
    estimate = float(centered.sum() / (r - 1))
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    return estimate, z * float(centered.std(ddof=1)) / np.sqrt(r)


_REPLICA_CHUNK = 500


def covariance_decay_profile(
    g: Graph,
    marks: np.ndarray,
    model: Model,
    pairs: Sequence[tuple[Sequence[int], Sequence[int], int]],
    horizon: float,
    replicas: int,
    seed: int,
    f: RegionFunctional = final_mean,
    dt: float | None = None,
    threads: int = 1,
    confidence: float = 0.95,
) -> DecayProfile:
    replicas = validate_natural(replicas, "replicas", minimum=100)
    if not pairs:
        raise ValidationError("at least one (A1, A2, distance) pair is required")
    regions = [
        (validate_vertex_set(a1, g.vertex_count, "A1"), validate_vertex_set(a2, g.vertex_count, "A2"), int(d))
        for a1, a2, d in pairs
    ]
    regions.sort(key=lambda item: item[2])
    idx1 = [np.asarray(a1) for a1, _, _ in regions]
    idx2 = [np.asarray(a2) for _, a2, _ in regions]

    def run_chunk(chunk: tuple[int, int]) -> np.ndarray:
        start, stop = chunk
        values = np.empty((stop - start, len(regions), 2))
        if isinstance(model, DiffusionModel):
            if dt is None:
                raise ValidationError(f"{model.name} is a diffusion; dt is required")
            noise = NoiseSource(derive_seed(seed, TAG_REPLICA, start), batch=stop - start)
            steps = _time_grid(horizon, dt)
            _, states = simulate_diffusion_batch(g, marks, model, horizon, dt, noise, stride=steps)
            for b in range(stop - start):
                for j in range(len(regions)):
                    values[b, j] = f(states[b, idx1[j]]), f(states[b, idx2[j]])
            return values
        for b, r in enumerate(range(start, stop)):
            ts = simulate_discrete(g, marks, model, int(horizon), seed=derive_seed(seed, TAG_REPLICA, r))
            for j in range(len(regions)):
                values[b, j] = f(ts.paths[idx1[j]]), f(ts.paths[idx2[j]])
        return values

    chunks = [(s, min(s + _REPLICA_CHUNK, replicas)) for s in range(0, replicas, _REPLICA_CHUNK)]
    values = np.concatenate(map_ordered(run_chunk, chunks, threads), axis=0)
    points = []
    for j, (_, _, distance) in enumerate(regions):
        est, half = covariance(values[:, j, 0], values[:, j, 1], confidence)
        points.append(DecayPoint(distance, est, half))
    logger.info("decay profile over %d replicas: %s", replicas, [(p.distance, round(p.estimate, 6)) for p in points])
    return DecayProfile(tuple(points))
