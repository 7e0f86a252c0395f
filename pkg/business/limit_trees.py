"""Galton-Watson and unimodular Galton-Watson limit trees.

Offspring laws are finite probability vectors (Poisson laws are truncated
once the tail mass drops below the configured tolerance and renormalised).
"""
from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

import config
from business.graphs import Graph, RootedGraph
from business.seeding import TAG_TREE, make_rng
from business.validators import NumericalError, ValidationError, validate_natural, validate_positive

logger = logging.getLogger(__name__)


class ConvergenceError(NumericalError):
    pass


class DualityError(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class DegreeDist:
    probabilities: np.ndarray
    tail_tolerance: float = 1e-12
    finite_second_moment: bool = True
    label: str = ""

    def __post_init__(self) -> None:
        p = np.array(self.probabilities, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValidationError("a degree distribution needs at least one entry")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValidationError("degree probabilities must be finite and non-negative")
        total = math.fsum(p.tolist())
        if abs(total - 1.0) > max(self.tail_tolerance, 1e-12):
            raise ValidationError(f"degree probabilities sum to {total:.15g}, not 1")
        p = np.trim_zeros(p, "b") if p[-1] == 0 and p.size > 1 else p
        p = p if p.size else np.array([1.0])
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    # --- constructors ---

    @classmethod
    def point_mass(cls, k: int) -> "DegreeDist":
        k = validate_natural(k, "k")
        p = np.zeros(k + 1)
        p[k] = 1.0
        return cls(p, label=f"delta:{k}")

    @classmethod
    def poisson(cls, theta: float, tail_tolerance: float | None = None) -> "DegreeDist":
        theta = validate_positive(theta, "theta")
        tol = config.POISSON_TAIL_TOLERANCE if tail_tolerance is None else tail_tolerance
        k_max = int(stats.poisson.isf(tol, theta)) + 1
        while stats.poisson.sf(k_max, theta) >= tol:
            k_max += 1
        p = stats.poisson.pmf(np.arange(k_max + 1), theta)
        return cls(p / p.sum(), tail_tolerance=tol, label=f"poisson:{theta:g}")

    @classmethod
    def from_mapping(cls, weights: Mapping[int, float], normalize: bool = False) -> "DegreeDist":
        if not weights:
            raise ValidationError("empty degree distribution")
        k_max = max(validate_natural(k, "degree") for k in weights)
        p = np.zeros(k_max + 1)
        for k, w in weights.items():
            p[int(k)] += float(w)
        if normalize:
            if p.sum() <= 0:
                raise ValidationError("degree weights sum to zero")
            p = p / p.sum()
        return cls(p, tail_tolerance=1e-9, label=",".join(f"{k}:{weights[k]:g}" for k in sorted(weights)))

    @classmethod
    def power_law(cls, gamma: float, k_max: int) -> "DegreeDist":
        """p_k proportional to k^-gamma on 1..k_max; flagged when the untruncated law has no second moment."""
        gamma = validate_positive(gamma, "gamma")
        k = np.arange(1, validate_natural(k_max, "k_max", minimum=1) + 1, dtype=np.float64)
        w = k**-gamma
        p = np.concatenate([[0.0], w / w.sum()])
        return cls(p, finite_second_moment=gamma > 3.0, label=f"powerlaw:{gamma:g}:{k_max}")

    @classmethod
    def from_spec(cls, spec: str) -> "DegreeDist":
        """Parse 'poisson:2', 'delta:3', 'powerlaw:2.5:100' or '0:0.2,1:0.2,3:0.6'."""
        text = spec.strip()
        try:
            if text.startswith("poisson:"):
                return cls.poisson(float(text.split(":", 1)[1]))
            if text.startswith("delta:"):
                return cls.point_mass(int(text.split(":", 1)[1]))
            if text.startswith("powerlaw:"):
                _, gamma, k_max = text.split(":")
                return cls.power_law(float(gamma), int(k_max))
            pairs = [item.split(":") for item in text.split(",") if item.strip()]
            return cls.from_mapping({int(k): float(w) for k, w in pairs}, normalize=True)
        except ValueError as e:
            raise ValidationError(f"cannot parse degree distribution {spec!r}") from e

    # --- moments and generating functions ---

    @property
    def k_max(self) -> int:
        return int(self.probabilities.size - 1)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.probabilities.size, dtype=np.float64)

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.probabilities))

    @property
    def second_moment(self) -> float:
        return float(np.dot(self.support**2, self.probabilities))

    def pgf(self, s: float | np.ndarray) -> float | np.ndarray:
        return np.polynomial.polynomial.polyval(s, self.probabilities)

    def pgf_derivative(self, s: float | np.ndarray) -> float | np.ndarray:
        return np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(self.probabilities))

    def padded(self, size: int) -> np.ndarray:
        out = np.zeros(max(size, self.probabilities.size))
        out[: self.probabilities.size] = self.probabilities
        return out

    def tv(self, other: "DegreeDist") -> float:
        size = max(self.probabilities.size, other.probabilities.size)
        return 0.5 * float(np.abs(self.padded(size) - other.padded(size)).sum())

    def as_dict(self) -> dict[str, float]:
        return {str(k): float(p) for k, p in enumerate(self.probabilities) if p > 0}


def size_biased(rho: DegreeDist) -> DegreeDist:
    m = rho.mean
    if m <= 0:
        raise ValidationError("size-biasing needs a positive mean")
    p = rho.probabilities
    if p.size == 1:
        raise ValidationError("size-biasing needs a positive mean")
    hat = np.arange(1, p.size) * p[1:] / m
    return DegreeDist(hat / hat.sum(), tail_tolerance=rho.tail_tolerance,
                      finite_second_moment=rho.finite_second_moment, label=f"hat({rho.label})")


def theta(rho: DegreeDist) -> float:
    m = rho.mean
    if m <= 0:
        raise ValidationError("theta needs a positive mean")
    k = rho.support
    return float(np.dot(k * (k - 1), rho.probabilities) / m)


# --- samplers ---

def _grow(
    root_law: np.ndarray,
    child_law: np.ndarray,
    depth: int,
    rng: np.random.Generator,
    vertex_budget: int,
) -> RootedGraph:
    parents, kids = [], []
    level = np.zeros(1, dtype=np.int64)
    next_id = 1
    truncated = False
    for gen in range(depth):
        law = root_law if gen == 0 else child_law
        counts = rng.choice(law.size, size=level.size, p=law)
        born = int(counts.sum())
        if born == 0:
            break
        if next_id + born > vertex_budget:
            truncated = True
            logger.debug("tree truncated at generation %d (budget %d)", gen, vertex_budget)
            break
        children = np.arange(next_id, next_id + born, dtype=np.int64)
        parents.append(np.repeat(level, counts))
        kids.append(children)
        next_id += born
        level = children
    u = np.concatenate(parents) if parents else np.empty(0, dtype=np.int64)
    v = np.concatenate(kids) if kids else np.empty(0, dtype=np.int64)
    return RootedGraph(Graph._from_pairs(next_id, u, v), 0, truncated=truncated)


def _budget(vertex_budget: int | None) -> int:
    return config.TREE_VERTEX_BUDGET if vertex_budget is None else validate_natural(vertex_budget, "vertex_budget", 1)


def sample_ugw(rho: DegreeDist, depth: int, seed: int, vertex_budget: int | None = None) -> RootedGraph:
    depth = validate_natural(depth, "depth")
    hat = size_biased(rho).probabilities if rho.mean > 0 else np.array([1.0])
    return _grow(rho.probabilities, hat, depth, make_rng(seed, TAG_TREE, 0), _budget(vertex_budget))


def sample_gw(offspring: DegreeDist, depth: int, seed: int, vertex_budget: int | None = None) -> RootedGraph:
    depth = validate_natural(depth, "depth")
    law = offspring.probabilities
    return _grow(law, law, depth, make_rng(seed, TAG_TREE, 1), _budget(vertex_budget))


# --- survival ---

def extinction_fixed_point(rho: DegreeDist, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Smallest fixed point in [0, 1] of the size-biased law's generating function."""
    hat = size_biased(rho)
    if hat.probabilities.size > 1 and hat.probabilities[1] == 1.0:
        return 0.0
    if theta(rho) <= 1.0:
        return 1.0
    q = 0.0
    for it in range(1, max_iter + 1):
        nxt = float(hat.pgf(q))
        if abs(nxt - q) < tol:
            return nxt
        q = nxt
    raise ConvergenceError(f"extinction fixed point did not converge in {max_iter} iterations (last step {abs(nxt - q):.3g})")


def survival_prob(rho: DegreeDist) -> float:
    if rho.mean <= 0:
        return 0.0
    q = extinction_fixed_point(rho)
    if q >= 1.0:
        return 0.0
    return float(1.0 - rho.pgf(q))


def sample_ugw_conditioned(
    rho: DegreeDist,
    depth: int,
    seed: int,
    survive: bool = True,
    vertex_budget: int | None = None,
) -> RootedGraph:
    """UGW(rho) ball conditioned on |T| = infinity (survive=True) or on extinction.

    Each vertex carries a type: S (its subtree is infinite) or E (finite). With
    q the extinction probability of a size-biased subtree, an E vertex has k
    children w.p. hat_k q^k / q, all of type E; an S vertex has k children
    w.p. hat_k (1 - q^k) / (1 - q), of which Binomial(k, 1 - q) conditioned to
    be >= 1 are of type S. The root uses rho in place of hat.
    """
    depth = validate_natural(depth, "depth")
    q = extinction_fixed_point(rho)
    s = survival_prob(rho)
    if survive and s <= 0.0:
        raise ValidationError("cannot condition on survival: survival probability is 0")
    if not survive and s >= 1.0:
        raise ValidationError("cannot condition on extinction: survival probability is 1")
    hat = size_biased(rho).probabilities
    rng = make_rng(seed, TAG_TREE, 2 if survive else 3)
    budget = _budget(vertex_budget)

    def tilt(law: np.ndarray, alive: bool) -> np.ndarray:
        k = np.arange(law.size)
        w = law * (1.0 - q**k) if alive else law * q**k
        total = w.sum()
        return w / total if total > 0 else w

    laws = {
        (True, True): tilt(rho.probabilities, True),
        (True, False): tilt(rho.probabilities, False),
        (False, True): tilt(hat, True),
        (False, False): tilt(hat, False),
    }

    parents, kids = [], []
    level = np.zeros(1, dtype=np.int64)
    alive = np.array([survive])
    next_id = 1
    truncated = False
    for gen in range(depth):
        counts = np.zeros(level.size, dtype=np.int64)
        n_alive = np.zeros(level.size, dtype=np.int64)
        for flag in (True, False):
            idx = np.flatnonzero(alive == flag)
            if idx.size == 0:
                continue
            law = laws[(gen == 0, flag)]
            counts[idx] = rng.choice(law.size, size=idx.size, p=law)
            if flag:
                j = rng.binomial(counts[idx], 1.0 - q)
                redo = j == 0
                while np.any(redo):
                    j[redo] = rng.binomial(counts[idx][redo], 1.0 - q)
                    redo = j == 0
                n_alive[idx] = j
        born = int(counts.sum())
        if born == 0:
            break
        if next_id + born > budget:
            truncated = True
            break
        children = np.arange(next_id, next_id + born, dtype=np.int64)
        parents.append(np.repeat(level, counts))
        kids.append(children)
        # the first n_alive children of each parent are the surviving ones
        offsets = np.arange(born) - np.repeat(np.cumsum(counts) - counts, counts)
        alive = offsets < np.repeat(n_alive, counts)
        next_id += born
        level = children
    u = np.concatenate(parents) if parents else np.empty(0, dtype=np.int64)
    v = np.concatenate(kids) if kids else np.empty(0, dtype=np.int64)
    return RootedGraph(Graph._from_pairs(next_id, u, v), 0, truncated=truncated)


# --- duality ---

@dataclass(frozen=True)
class DualityReport:
    m: float
    theta: float
    survival: float
    alpha: float
    beta: float
    dual: DegreeDist
    dual_theta: float

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "theta": self.theta,
            "survival": self.survival,
            "alpha": self.alpha,
            "beta": self.beta,
            "dual": self.dual.as_dict(),
            "dual_theta": self.dual_theta,
        }


def h_function(rho: DegreeDist, x: float | np.ndarray) -> float | np.ndarray:
    m = rho.mean
    k = rho.support
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    base = np.clip(1.0 - 2.0 * xs / m, 0.0, None)
    terms = (k * rho.probabilities)[None, :] * np.power(base[:, None], k[None, :] / 2.0)
    out = m - 2.0 * xs - terms.sum(axis=1)
    return float(out[0]) if np.ndim(x) == 0 else out


def _require_supercritical(rho: DegreeDist) -> None:
    if not rho.finite_second_moment:
        raise ValidationError(f"{rho.label or 'rho'} has an infinite second moment; duality is not defined for it")
    if theta(rho) <= 1.0:
        raise ValidationError(f"duality needs a supercritical law (theta = {theta(rho):.6g} <= 1)")


def dual_alpha(rho: DegreeDist, grid_points: int = 10_000, tol: float = 1e-12) -> float:
    """Smallest root of H on (0, m/2) by grid scan plus bisection; m/2 if there is none."""
    _require_supercritical(rho)
    half = rho.mean / 2.0
    grid = np.linspace(0.0, half, grid_points + 1)[1:]
    values = h_function(rho, grid)
    interior = values[:-1]  # H(m/2) = 0 identically
    zeros = np.flatnonzero(interior == 0.0)
    flips = np.flatnonzero(np.sign(interior[:-1]) * np.sign(interior[1:]) < 0)
    roots = []
    if zeros.size:
        roots.append(float(grid[zeros[0]]))
    if flips.size:
        i = int(flips[0])
        roots.append(float(optimize.bisect(lambda x: h_function(rho, x), grid[i], grid[i + 1], xtol=tol)))
    if not roots:
        return half
    return min(roots)


def dual_distribution(rho: DegreeDist, tolerance: float = 1e-8) -> DualityReport:
    _require_supercritical(rho)
    s = survival_prob(rho)
    if s >= 1.0:
        raise ValidationError("survival probability is 1; the conditioned-on-extinction law does not exist")
    m = rho.mean
    alpha = dual_alpha(rho)
    beta = math.sqrt(max(0.0, 1.0 - 2.0 * alpha / m))
    k = rho.support
    dual_p = rho.probabilities * beta**k / (1.0 - s)
    total = float(dual_p.sum())
    if abs(total - 1.0) > tolerance:
        raise DualityError(f"dual law sums to {total:.12g}; expected 1 within {tolerance}")
    dual = DegreeDist(dual_p / total, tail_tolerance=max(rho.tail_tolerance, tolerance), label=f"dual({rho.label})")
    dual_theta = theta(dual) if dual.mean > 0 else 0.0
    if dual_theta > 1.0 + tolerance:
        raise DualityError(f"dual theta {dual_theta:.12g} exceeds 1")
    logger.info("duality for %s: s=%.6f alpha=%.6f dual theta=%.6f", rho.label or "rho", s, alpha, dual_theta)
    return DualityReport(m=m, theta=theta(rho), survival=s, alpha=alpha, beta=beta, dual=dual, dual_theta=dual_theta)


def poisson_dual(theta_value: float, tol: float = 1e-13) -> float:
    """The solution t in (0, 1) of t e^-t = theta e^-theta, for theta > 1."""
    th = float(theta_value)
    if not th > 1.0:
        raise ValidationError(f"poisson_dual needs theta > 1 (got {th})")
    target = th * math.exp(-th)

    def f(t: float) -> float:
        return t * math.exp(-t) - target

    def fprime(t: float) -> float:
        return (1.0 - t) * math.exp(-t)

    try:
        # f is increasing and concave on (0, 1): Newton from the left stays left of the root
        t = float(optimize.newton(f, target, fprime=fprime, tol=tol, maxiter=100))
        if 0.0 < t < 1.0 and abs(f(t)) < 1e-12:
            return t
    except RuntimeError:
        pass
    logger.debug("Newton failed for theta=%g; falling back to bisection", th)
    return float(optimize.bisect(f, 1e-300, 1.0, xtol=tol))
