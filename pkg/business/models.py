"""Built-in particle-system models.

Every built-in reduces over its neighbours through the sorted bundle (or a
sorted vectorised equivalent), so relabelling vertices never changes an
output bit.
"""
from __future__ import annotations

from collections.abc import Callable, Mapping

import numpy as np

from business.dynamics import DiffusionModel, DiscreteModel, Model, ModelError, NeighborBundle
from business.graphs import Graph
from business.validators import validate_probability


def _segment_rows(g: Graph) -> np.ndarray:
    return np.repeat(np.arange(g.vertex_count, dtype=np.int64), g.degrees())


# --- voter ---

def _voter_update(k: int, history: np.ndarray, nbrs: NeighborBundle, u: float) -> int:
    return nbrs[int(u * len(nbrs))]


def _hold(k: int, history: np.ndarray, u: float):
    return history[-1]


def _voter_batch(k: int, states: np.ndarray, g: Graph, u: np.ndarray) -> np.ndarray:
    if g.indices.size == 0:
        return states.copy()
    vals = states[g.indices]
    ordered = vals[np.lexsort((vals, _segment_rows(g)))]
    deg = g.degrees()
    pick = g.indptr[:-1] + np.floor(u * deg).astype(np.int64)
    return np.where(deg > 0, ordered[np.minimum(pick, ordered.size - 1)], states)


def voter() -> DiscreteModel:
    """Adopt the state of a uniformly chosen neighbour; isolated vertices hold."""
    return DiscreteModel("voter", _voter_update, _hold, batch_update=_voter_batch)


# --- noisy majority ---

def noisy_majority(epsilon: float = 0.0) -> DiscreteModel:
    """Binary majority of neighbours (ties keep the own state), then flipped w.p. epsilon."""
    eps = validate_probability(epsilon, "epsilon")

    def update(k: int, history: np.ndarray, nbrs: NeighborBundle, u: float) -> int:
        ones = sum(1 for s in nbrs if s == 1)
        twice, deg = 2 * ones, len(nbrs)
        own = int(history[-1])
        state = 1 if twice > deg else 0 if twice < deg else own
        return 1 - state if u < eps else state

    def isolated(k: int, history: np.ndarray, u: float) -> int:
        own = int(history[-1])
        return 1 - own if u < eps else own

    def batch(k: int, states: np.ndarray, g: Graph, u: np.ndarray) -> np.ndarray:
        deg = g.degrees()
        ones = np.bincount(_segment_rows(g), weights=(states[g.indices] == 1), minlength=g.vertex_count)
        twice = 2 * ones.astype(np.int64)
        state = np.where(twice > deg, 1, np.where(twice < deg, 0, states))
        return np.where(u < eps, 1 - state, state).astype(np.int64)

    return DiscreteModel("noisy_majority", update, isolated, alphabet=(0, 1), batch_update=batch,
                         params={"epsilon": eps})


# --- diffusions ---

def _sorted_neighbor_sum(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Sum over axis 2 of values[B, n, width, d] after sorting, padding masked out."""
    padded = np.where(mask[None, :, :, None], values, np.inf)
    ordered = np.sort(padded, axis=2)
    return np.where(mask[None, :, :, None], ordered, 0.0).sum(axis=2)


def _bundle_sum(nbrs: NeighborBundle, own: np.ndarray) -> np.ndarray:
    arr = np.asarray(nbrs, dtype=np.float64).reshape(len(nbrs), own.size)
    return np.sort(arr, axis=0).sum(axis=0)


def consensus_sde(sigma0: float = 0.0, dimension: int = 1) -> DiffusionModel:
    """b = neighbour mean - own state (0 when isolated), sigma = sigma0 * identity."""
    sigma0 = float(sigma0)
    if sigma0 < 0:
        raise ModelError("sigma0 must be >= 0")
    dimension = int(dimension)

    def drift(t: float, own: np.ndarray, nbrs: NeighborBundle) -> np.ndarray:
        if not nbrs:
            return np.zeros_like(own)
        return _bundle_sum(nbrs, own) / len(nbrs) - own

    def sigma(t: float, own: np.ndarray, nbrs: NeighborBundle) -> np.ndarray:
        return sigma0 * np.eye(dimension)

    def batch_drift(t: float, x: np.ndarray, g: Graph) -> np.ndarray:
        table, mask = g.padded_adjacency
        deg = g.degrees()[None, :, None]
        total = _sorted_neighbor_sum(x[:, table, :], mask)
        return np.where(deg > 0, total / np.maximum(deg, 1) - x, 0.0)

    return DiffusionModel(
        "consensus_sde",
        dimension,
        drift,
        sigma,
        lipschitz=2.0,
        batch_drift=batch_drift,
        batch_noise=lambda t, x, g, dw: sigma0 * dw,
        params={"sigma0": sigma0},
    )


def kuramoto(K: float = 1.0, sigma0: float = 0.0) -> DiffusionModel:
    """Scalar phases: b = (K/|N_v|) sum_u sin(x_u - x_v), sigma = sigma0."""
    K, sigma0 = float(K), float(sigma0)
    if sigma0 < 0:
        raise ModelError("sigma0 must be >= 0")

    def drift(t: float, own: np.ndarray, nbrs: NeighborBundle) -> np.ndarray:
        if not nbrs:
            return np.zeros_like(own)
        diffs = np.sin(np.asarray(nbrs, dtype=np.float64).reshape(len(nbrs), 1) - own)
        return K * np.sort(diffs, axis=0).sum(axis=0) / len(nbrs)

    def sigma(t: float, own: np.ndarray, nbrs: NeighborBundle) -> np.ndarray:
        return np.array([[sigma0]])

    def batch_drift(t: float, x: np.ndarray, g: Graph) -> np.ndarray:
        table, mask = g.padded_adjacency
        deg = g.degrees()[None, :, None]
        total = _sorted_neighbor_sum(np.sin(x[:, table, :] - x[:, :, None, :]), mask)
        return np.where(deg > 0, K * total / np.maximum(deg, 1), 0.0)

    return DiffusionModel(
        "kuramoto",
        1,
        drift,
        sigma,
        lipschitz=2.0 * abs(K),
        batch_drift=batch_drift,
        batch_noise=lambda t, x, g, dw: sigma0 * dw,
        params={"K": K, "sigma0": sigma0},
    )


_REGISTRY: dict[str, Callable[..., Model]] = {
    "voter": voter,
    "noisy_majority": noisy_majority,
    "consensus_sde": consensus_sde,
    "kuramoto": kuramoto,
}


def available_models() -> list[str]:
    return sorted(_REGISTRY)


def builtin_model(name: str, params: Mapping[str, object] | None = None) -> Model:
    factory = _REGISTRY.get(name)
    if factory is None:
        raise ModelError(f"unknown model {name!r}; expected one of {available_models()}")
    try:
        return factory(**dict(params or {}))
    except TypeError as e:
        raise ModelError(f"bad parameters for {name}: {e}") from e
