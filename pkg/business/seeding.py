"""Seed derivation and counter-based noise streams.

Every random draw in the package comes from a generator keyed by a tuple
of integers (seed, tag, ...), never from global state. For the dynamics,
the noise at (vertex label v, step k, stream s) is column v of a Philox
block keyed by (seed, s, k), so it does not depend on the order in which
vertices are visited or on the number of worker threads.
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TypeVar

import numpy as np

from business.validators import ValidationError, validate_seed

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# Tags keep streams for different purposes apart.
TAG_GRAPH = 1
TAG_MARKS = 2
TAG_DYNAMICS = 3
TAG_TREE = 4
TAG_REPLICA = 5
TAG_SUBSAMPLE = 6
TAG_ROOT = 7
TAG_GLAUBER = 8

_UNIFORM = 0
_NORMAL = 1

PRIMARY_STREAM = 0
FRESH_STREAM = 1


def derive_seed(seed: int, *keys: int) -> int:
    validate_seed(seed)
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    validate_seed(seed)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *[int(k) for k in keys]])))


def replica_seeds(seed: int, count: int, tag: int = TAG_REPLICA) -> list[int]:
    return [derive_seed(seed, tag, r) for r in range(count)]


@dataclass(frozen=True, eq=False)
class NoiseSource:
    """Per-(vertex, step) noise for the dynamics engines.

    streams: per-vertex stream id (0 = primary W, 1 = fresh W~); None means all primary.
    labels:  per-vertex counter label; None means the vertex index itself.
    batch:   number of independent replicas drawn side by side (diffusion engine).
    """

    seed: int
    streams: np.ndarray | None = None
    labels: np.ndarray | None = None
    batch: int = 1

    def __post_init__(self) -> None:
        validate_seed(self.seed)
        if self.batch < 1:
            raise ValidationError("batch must be >= 1")
        if self.streams is not None:
            object.__setattr__(self, "streams", np.asarray(self.streams, dtype=np.int64))
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.size and labels.min() < 0:
                raise ValidationError("noise labels must be non-negative")
            object.__setattr__(self, "labels", labels)

    def with_streams(self, streams: Sequence[int] | np.ndarray) -> "NoiseSource":
        return NoiseSource(self.seed, np.asarray(streams, dtype=np.int64), self.labels, self.batch)

    def with_labels(self, labels: Sequence[int] | np.ndarray) -> "NoiseSource":
        return NoiseSource(self.seed, self.streams, np.asarray(labels, dtype=np.int64), self.batch)

    def uniforms(self, step: int, n: int, width: int = 1) -> np.ndarray:
        return self._draw(_UNIFORM, step, n, width)

    def normals(self, step: int, n: int, width: int = 1) -> np.ndarray:
        return self._draw(_NORMAL, step, n, width)

    def _draw(self, kind: int, step: int, n: int, width: int) -> np.ndarray:
        labels = np.arange(n, dtype=np.int64) if self.labels is None else self.labels
        streams = np.zeros(n, dtype=np.int64) if self.streams is None else self.streams
        if labels.shape[0] != n or streams.shape[0] != n:
            raise ValidationError(f"noise source is sized for {labels.shape[0]} vertices, graph has {n}")
        size = int(labels.max()) + 1 if n else 0
        out = np.empty((self.batch, n, width), dtype=np.float64)
        for stream in np.unique(streams):
            gen = make_rng(self.seed, TAG_DYNAMICS, kind, int(stream), int(step))
            shape = (self.batch, size, width)
            block = gen.random(shape) if kind == _UNIFORM else gen.standard_normal(shape)
            mask = streams == stream
            out[:, mask, :] = block[:, labels[mask], :]
        return out


def map_ordered(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Apply fn to items, results in input order whatever the thread count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug("Running %d tasks on %d threads", len(items), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
