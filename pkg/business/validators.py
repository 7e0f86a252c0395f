from __future__ import annotations

import math
from collections.abc import Iterable, Sequence


class ValidationError(Exception):
    pass


class NumericalError(Exception):
    pass


class ConfigError(ValidationError):
    """A bad experiment configuration value, with the config line it came from when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        super().__init__(message)

    def located(self) -> str:
        where = self.source or "<config>"
        return f"{where}:{self.line}: {self}" if self.line else f"{where}: {self}"


def validate_probability(p: float, name: str = "p") -> float:
    p = float(p)
    if math.isnan(p) or p < 0.0 or p > 1.0:
        raise ValidationError(f"{name} must be in [0, 1] (got {p})")
    return p


def validate_natural(value: int, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise ValidationError(f"{name} must be an integer (got {value!r})")
    value = int(value)
    if value < minimum:
        raise ValidationError(f"{name} must be >= {minimum} (got {value})")
    return value


def validate_positive(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValidationError(f"{name} must be a positive finite number (got {value})")
    return value


def validate_seed(seed: int) -> int:
    if seed is None:
        raise ValidationError("A seed is required (no wall-clock default)")
    if isinstance(seed, bool) or int(seed) != seed or int(seed) < 0 or int(seed) >= 2**64:
        raise ValidationError(f"seed must be an unsigned 64-bit integer (got {seed!r})")
    return int(seed)


def validate_weights(weights: Sequence[float], name: str, tolerance: float = 1e-9) -> list[float]:
    values = [float(w) for w in weights]
    if not values:
        raise ValidationError(f"{name} must be nonempty")
    if any(w < 0.0 or not math.isfinite(w) for w in values):
        raise ValidationError(f"{name} entries must be finite and non-negative")
    total = math.fsum(values)
    if abs(total - 1.0) > tolerance:
        raise ValidationError(f"{name} must sum to 1 (got {total:.12g})")
    return values


def validate_vertex_set(vertices: Iterable[int], vertex_count: int, name: str) -> tuple[int, ...]:
    out = tuple(sorted({int(v) for v in vertices}))
    if not out:
        raise ValidationError(f"{name} must be a nonempty vertex set")
    if out[0] < 0 or out[-1] >= vertex_count:
        raise ValidationError(f"{name} contains a vertex outside 0..{vertex_count - 1}")
    return out
