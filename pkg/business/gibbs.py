"""Gibbs measures on finite graphs with a pairwise interaction and a reference law.

Configurations are numpy arrays of alphabet symbols, one per vertex.
Internally everything works on symbol indices and in log-space.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

import config
from business.graphs import Graph
from business.seeding import TAG_GLAUBER, TAG_MARKS, make_rng
from business.validators import (
    ValidationError,
    validate_natural,
    validate_vertex_set,
    validate_weights,
)

logger = logging.getLogger(__name__)

_CHUNK = 1 << 16


class StateSpaceError(ValidationError):
    pass


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


@dataclass(frozen=True, eq=False)
class GibbsSpec:
    alphabet: tuple
    psi: np.ndarray
    lam: np.ndarray

    def __post_init__(self) -> None:
        alphabet = tuple(self.alphabet)
        if not alphabet:
            raise ValidationError("alphabet must be nonempty")
        if len(set(alphabet)) != len(alphabet):
            raise ValidationError("alphabet symbols must be distinct")
        size = len(alphabet)
        psi = np.array(self.psi, dtype=np.float64)
        if psi.shape != (size, size):
            raise ValidationError(f"psi must be a {size}x{size} table (got shape {psi.shape})")
        if not np.all(np.isfinite(psi)) or np.any(psi < 0):
            raise ValidationError("psi entries must be finite and non-negative")
        if not np.array_equal(psi, psi.T):
            raise ValidationError("psi must be symmetric")
        if np.any(psi.max(axis=1) <= 0):
            raise ValidationError("every psi row needs a strictly positive entry")
        lam = np.array(validate_weights(self.lam, "lambda"), dtype=np.float64)
        if lam.size != size:
            raise ValidationError(f"lambda has {lam.size} weights for {size} symbols")
        psi.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(alphabet)})

    @property
    def size(self) -> int:
        return len(self.alphabet)

    @property
    def log_psi(self) -> np.ndarray:
        return _log(self.psi)

    @property
    def log_lambda(self) -> np.ndarray:
        return _log(self.lam)

    @property
    def symbols(self) -> np.ndarray:
        return np.asarray(self.alphabet)

    def encode(self, configuration: Sequence) -> np.ndarray:
        try:
            return np.fromiter((self._index[s.item() if hasattr(s, "item") else s] for s in configuration),
                               dtype=np.int64, count=len(configuration))
        except KeyError as e:
            raise ValidationError(f"symbol {e.args[0]!r} is not in the alphabet") from e

    def decode(self, indices: np.ndarray) -> np.ndarray:
        return self.symbols[np.asarray(indices, dtype=np.int64)]

    @classmethod
    def from_dict(cls, data: Mapping) -> "GibbsSpec":
        missing = {"alphabet", "psi", "lambda"} - set(data)
        if missing:
            raise ValidationError(f"Gibbs spec is missing {sorted(missing)}")
        return cls(tuple(data["alphabet"]), data["psi"], data["lambda"])

    def to_dict(self) -> dict:
        return {"alphabet": list(self.alphabet), "psi": self.psi.tolist(), "lambda": self.lam.tolist()}


def ising_spec(beta: float, field: float = 0.0) -> GibbsSpec:
    """Alphabet (-1, 1), psi(a, b) = exp(beta a b), lambda proportional to exp(field a)."""
    spins = np.array([-1.0, 1.0])
    lam = np.exp(field * spins)
    return GibbsSpec((-1, 1), np.exp(beta * np.outer(spins, spins)), lam / lam.sum())


def _check_configuration(g: Graph, spec: GibbsSpec, configuration: Sequence) -> np.ndarray:
    if len(configuration) != g.vertex_count:
        raise ValidationError(f"configuration has {len(configuration)} entries for {g.vertex_count} vertices")
    return spec.encode(configuration)


def log_weight(g: Graph, spec: GibbsSpec, configuration: Sequence) -> float:
    idx = _check_configuration(g, spec, configuration)
    u, v = g.edges().T
    return float(spec.log_lambda[idx].sum() + spec.log_psi[idx[u], idx[v]].sum())


def unnormalized_weight(g: Graph, spec: GibbsSpec, configuration: Sequence) -> float:
    return math.exp(log_weight(g, spec, configuration))


@dataclass(frozen=True, eq=False)
class GibbsDistribution:
    """A normalised law over all configurations of `vertices`, in lexicographic order.

    The first vertex is the most significant digit, so index 0 is the
    configuration with every vertex at alphabet[0].
    """

    spec: GibbsSpec
    vertices: tuple[int, ...]
    probabilities: np.ndarray
    log_partition: float

    @property
    def partition(self) -> float:
        return math.exp(self.log_partition)

    @property
    def state_count(self) -> int:
        return int(self.probabilities.size)

    def digits(self, indices: np.ndarray) -> np.ndarray:
        return _digits(np.asarray(indices, dtype=np.int64), len(self.vertices), self.spec.size)

    def configuration(self, index: int) -> np.ndarray:
        return self.spec.decode(self.digits(np.array([index]))[0])

    def index_of(self, configuration: Sequence) -> int:
        idx = self.spec.encode(configuration)
        if idx.size != len(self.vertices):
            raise ValidationError(f"expected {len(self.vertices)} symbols, got {idx.size}")
        out = 0
        for d in idx.tolist():
            out = out * self.spec.size + d
        return out

    def probability(self, configuration: Sequence) -> float:
        return float(self.probabilities[self.index_of(configuration)])

    def marginals(self) -> np.ndarray:
        """(len(vertices), |alphabet|) array of single-site marginals."""
        size = self.spec.size
        out = np.zeros((len(self.vertices), size))
        for start in range(0, self.state_count, _CHUNK):
            idx = np.arange(start, min(start + _CHUNK, self.state_count))
            d = self.digits(idx)
            p = self.probabilities[idx]
            for s in range(size):
                out[:, s] += ((d == s) * p[:, None]).sum(axis=0)
        return out

    def marginal(self, vertex: int) -> dict:
        try:
            pos = self.vertices.index(int(vertex))
        except ValueError as e:
            raise ValidationError(f"vertex {vertex} is not in this distribution") from e
        row = self.marginals()[pos]
        return {sym: float(p) for sym, p in zip(self.spec.alphabet, row)}

    def conditional(self, fixed: Mapping[int, object]) -> "GibbsDistribution":
        """Condition on the symbols of some vertices; the result lives on the remaining vertices."""
        keep = [i for i, v in enumerate(self.vertices) if v not in fixed]
        pinned = [(i, self.spec.encode([fixed[v]])[0]) for i, v in enumerate(self.vertices) if v in fixed]
        mass = np.zeros(self.spec.size ** len(keep))
        weights = self.spec.size ** np.arange(len(keep) - 1, -1, -1, dtype=np.int64)
        for start in range(0, self.state_count, _CHUNK):
            idx = np.arange(start, min(start + _CHUNK, self.state_count))
            d = self.digits(idx)
            ok = np.ones(idx.size, dtype=bool)
            for i, s in pinned:
                ok &= d[:, i] == s
            if keep:
                np.add.at(mass, d[ok][:, keep] @ weights, self.probabilities[idx][ok])
            else:
                mass[0] += self.probabilities[idx][ok].sum()
        total = mass.sum()
        if total <= 0:
            raise ValidationError("conditioning event has probability zero")
        return GibbsDistribution(self.spec, tuple(self.vertices[i] for i in keep), mass / total,
                                 self.log_partition + math.log(total))


def _digits(indices: np.ndarray, n: int, size: int) -> np.ndarray:
    powers = size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (indices[:, None] // powers[None, :]) % size


def _enumerate(
    spec: GibbsSpec,
    vertices: tuple[int, ...],
    inner: tuple[np.ndarray, np.ndarray],
    outer: tuple[np.ndarray, np.ndarray],
) -> GibbsDistribution:
    """inner: edges between local positions; outer: (local position, fixed symbol index) pairs."""
    n = len(vertices)
    total = spec.size**n
    log_lam, log_psi = spec.log_lambda, spec.log_psi
    lw = np.empty(total)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        d = _digits(idx, n, spec.size)
        acc = log_lam[d].sum(axis=1)
        if inner[0].size:
            acc += log_psi[d[:, inner[0]], d[:, inner[1]]].sum(axis=1)
        if outer[0].size:
            acc += log_psi[d[:, outer[0]], outer[1][None, :]].sum(axis=1)
        lw[start : start + idx.size] = acc
    top = lw.max()
    if not np.isfinite(top):
        raise ValidationError("every configuration has zero weight")
    w = np.exp(lw - top)
    z = w.sum()
    return GibbsDistribution(spec, vertices, w / z, float(top + math.log(z)))


def _check_states(size: int, n: int, cap: int) -> None:
    if n * math.log(size) > math.log(cap) + 1e-12:
        raise StateSpaceError(f"{size}^{n} configurations exceed the cap of {cap}")


def exact_gibbs(g: Graph, spec: GibbsSpec, max_states: int | None = None) -> GibbsDistribution:
    cap = config.GIBBS_MAX_STATES if max_states is None else max_states
    _check_states(spec.size, g.vertex_count, cap)
    u, v = g.edges().T
    empty = np.empty(0, dtype=np.int64)
    dist = _enumerate(spec, tuple(range(g.vertex_count)), (u, v), (empty, empty))
    logger.debug("exact Gibbs over %d states, log Z = %.6f", dist.state_count, dist.log_partition)
    return dist


def boundary_of(g: Graph, region: Sequence[int]) -> tuple[int, ...]:
    inside = set(region)
    return tuple(sorted({u for v in inside for u in g.neighbors(v).tolist() if u not in inside}))


def conditional_kernel(
    g: Graph,
    spec: GibbsSpec,
    region: Sequence[int],
    boundary: Mapping[int, object],
    max_states: int | None = None,
) -> GibbsDistribution:
    """Law of the configuration on `region` given the symbols on its outer boundary."""
    cap = config.GIBBS_KERNEL_MAX_STATES if max_states is None else max_states
    a = validate_vertex_set(region, g.vertex_count, "region")
    _check_states(spec.size, len(a), cap)
    rim = boundary_of(g, a)
    given = {int(k) for k in boundary}
    if given != set(rim):
        missing = sorted(set(rim) - given)
        extra = sorted(given - set(rim))
        raise ValidationError(f"boundary must cover exactly the outer boundary; missing {missing}, extra {extra}")
    pos = {v: i for i, v in enumerate(a)}
    in_u, in_v, out_a, out_s = [], [], [], []
    for v in a:
        for w in g.neighbors(v).tolist():
            if w in pos:
                if v < w:
                    in_u.append(pos[v])
                    in_v.append(pos[w])
            else:
                out_a.append(pos[v])
                out_s.append(spec.encode([boundary[w]])[0])
    as_array = lambda xs: np.asarray(xs, dtype=np.int64)  # noqa: E731
    return _enumerate(spec, a, (as_array(in_u), as_array(in_v)), (as_array(out_a), as_array(out_s)))


def single_site_kernel(g: Graph, spec: GibbsSpec, configuration: Sequence, vertex: int) -> np.ndarray:
    """Heat-bath probabilities over the alphabet for `vertex` given the rest of the configuration."""
    idx = _check_configuration(g, spec, configuration)
    logits = spec.log_lambda + spec.log_psi[:, idx[g.neighbors(vertex)]].sum(axis=1)
    top = logits.max()
    if not np.isfinite(top):
        raise ValidationError(f"vertex {vertex} has no admissible symbol given its neighbours")
    w = np.exp(logits - top)
    return w / w.sum()


def glauber_chains(
    g: Graph,
    spec: GibbsSpec,
    sweeps: int,
    seed: int,
    burn_in: int | None = None,
    chains: int = 1,
) -> np.ndarray:
    """Run independent random-scan heat-bath chains side by side.

    Each chain starts from i.i.d. lambda and each sweep visits every vertex
    once in a fresh uniformly random order. Returns the (chains, n) array of
    final configurations as symbols.
    """
    sweeps = validate_natural(sweeps, "sweeps", minimum=1)
    burn_in = config.GLAUBER_BURN_IN_FACTOR * sweeps if burn_in is None else validate_natural(burn_in, "burn_in")
    chains = validate_natural(chains, "chains", minimum=1)
    n = g.vertex_count
    rng = make_rng(seed, TAG_GLAUBER)
    state = rng.choice(spec.size, size=(chains, n), p=spec.lam)
    if n == 0:
        return spec.decode(state)
    table, mask = g.padded_adjacency
    log_lam, log_psi_t = spec.log_lambda, spec.log_psi.T
    rows = np.arange(chains)
    cdf_cap = spec.size - 1
    base = np.tile(np.arange(n), (chains, 1))
    for _ in range(burn_in + sweeps):
        order = rng.permuted(base, axis=1)
        uniforms = rng.random((chains, n))
        for t in range(n):
            v = order[:, t]
            nb_states = state[rows[:, None], table[v]]  # (chains, width)
            terms = np.where(mask[v][:, :, None], log_psi_t[nb_states], 0.0)  # (chains, width, S)
            logits = log_lam[None, :] + terms.sum(axis=1)
            top = logits.max(axis=1)
            stuck = ~np.isfinite(top)
            w = np.exp(logits - np.where(stuck, 0.0, top)[:, None])
            cdf = np.cumsum(w, axis=1)
            cdf /= np.where(stuck, 1.0, cdf[:, -1])[:, None]
            pick = np.minimum((cdf <= uniforms[:, t, None]).sum(axis=1), cdf_cap)
            state[rows, v] = np.where(stuck, state[rows, v], pick)
    return spec.decode(state)


def glauber_sample(
    g: Graph,
    spec: GibbsSpec,
    sweeps: int,
    seed: int,
    burn_in: int | None = None,
) -> np.ndarray:
    return glauber_chains(g, spec, sweeps, seed, burn_in=burn_in, chains=1)[0]


def iid_sample(g: Graph, lam: Sequence[float], seed: int, alphabet: Sequence | None = None) -> np.ndarray:
    weights = np.asarray(validate_weights(lam, "lambda"))
    symbols = np.arange(weights.size) if alphabet is None else np.asarray(alphabet)
    if symbols.size != weights.size:
        raise ValidationError("alphabet and lambda have different lengths")
    rng = make_rng(seed, TAG_MARKS)
    return symbols[rng.choice(weights.size, size=g.vertex_count, p=weights)]
