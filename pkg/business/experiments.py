"""One function per command-line experiment.

Each run_* takes an ExperimentConfig and returns an ExperimentResult whose
summary is a plain dict (written as JSON by the presentation layer) and
whose curves are (x, value, ci) rows. Every random draw is derived from
the config seed, so a result is a pure function of the config.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import stats

from business.dynamics import (
    DiffusionModel,
    DiscreteModel,
    Model,
    TrajectorySet,
    covariance_decay_profile,
    simulate,
    simulate_diffusion,
    simulate_discrete,
)
from business.empirical import (
    canopy_mixture_root_law,
    component_empirical,
    component_functional_distribution,
    depth_sensitivity,
    giant_fraction,
    ergodicity_variance_curve,
    factorial_envelope,
    fit_factorial_envelope,
    fit_log_slope,
    global_empirical,
    lattice_root_law,
    root_law_monte_carlo,
    shift_average,
    tree_functional_distribution,
    tv_discrete,
    wasserstein1_paths,
    window_mean,
)
from business.gibbs import (
    GibbsSpec,
    conditional_kernel,
    exact_gibbs,
    glauber_chains,
    glauber_sample,
    iid_sample,
    ising_spec,
    single_site_kernel,
)
from business.graphs import (
    Graph,
    component_labels,
    gen_canopy_truncation,
    gen_configuration_model,
    gen_erdos_renyi,
    gen_gnm,
    gen_lattice_box,
    gen_random_regular,
    gen_regular_tree,
    graph_distances,
    largest_component,
)
from business.limit_trees import (
    DegreeDist,
    dual_distribution,
    poisson_dual,
    sample_ugw,
    sample_ugw_conditioned,
    survival_prob,
)
from business.local_topology import BallHistogram, histogram_tv, neighborhood_histogram, sample_ball_histogram
from business.models import builtin_model
from business.seeding import (
    FRESH_STREAM,
    PRIMARY_STREAM,
    TAG_DYNAMICS,
    TAG_GRAPH,
    TAG_MARKS,
    TAG_SUBSAMPLE,
    TAG_TREE,
    NoiseSource,
    derive_seed,
    make_rng,
    map_ordered,
)
from business.validators import ConfigError, ValidationError, validate_seed

logger = logging.getLogger(__name__)

InitSampler = Callable[[Graph, int], np.ndarray]


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    values: Mapping[str, Any] = field(default_factory=dict)
    threads: int = 1
    source: str | None = None
    locate: Callable[[str], int | None] | None = None
    marks_loader: Callable[[str, int], np.ndarray] | None = None
    gibbs_loader: Callable[[str], GibbsSpec] | None = None

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise self.fail("experiment", f"unknown experiment {self.experiment!r}")
        try:
            validate_seed(self.seed)
        except (ValidationError, TypeError, ValueError) as e:
            raise self.fail("seed", str(e)) from e
        if self.threads < 1:
            raise ConfigError("threads must be >= 1", source=self.source)

    def fail(self, key: str, message: str) -> ConfigError:
        line = self.locate(key) if self.locate else None
        return ConfigError(message, line=line, source=self.source)

    def _cast(self, key: str, value: Any, kind: Callable[[Any], Any], what: str) -> Any:
        try:
            if isinstance(value, bool) and kind is not bool:
                raise ValueError
            return kind(value)
        except (TypeError, ValueError) as e:
            raise self.fail(key, f"{key} must be {what} (got {value!r})") from e

    def integer(self, key: str, default: int, minimum: int | None = None) -> int:
        value = self.values.get(key, default)
        out = self._cast(key, value, int, "an integer")
        if float(value) != out:
            raise self.fail(key, f"{key} must be an integer (got {value!r})")
        if minimum is not None and out < minimum:
            raise self.fail(key, f"{key} must be >= {minimum} (got {out})")
        return out

    def real(self, key: str, default: float) -> float:
        out = self._cast(key, self.values.get(key, default), float, "a number")
        if not math.isfinite(out):
            raise self.fail(key, f"{key} must be finite")
        return out

    def integers(self, key: str, default: Sequence[int]) -> list[int]:
        raw = self.values.get(key, list(default))
        if not isinstance(raw, list) or not raw:
            raise self.fail(key, f"{key} must be a nonempty list")
        return [self._cast(key, v, int, "a list of integers") for v in raw]

    def reals(self, key: str, default: Sequence[float]) -> list[float]:
        raw = self.values.get(key, list(default))
        if not isinstance(raw, list) or not raw:
            raise self.fail(key, f"{key} must be a nonempty list")
        return [self._cast(key, v, float, "a list of numbers") for v in raw]

    def text(self, key: str, default: str) -> str:
        value = self.values.get(key, default)
        if not isinstance(value, str):
            raise self.fail(key, f"{key} must be a string")
        return value

    def section(self, key: str, default: Mapping[str, Any]) -> dict:
        value = self.values.get(key, default)
        if not isinstance(value, Mapping):
            raise self.fail(key, f"{key} must be an object")
        return dict(value)

    def tolerance(self, name: str, default: float) -> float:
        tolerances = self.section("tolerances", {})
        value = tolerances.get(name, default)
        try:
            return float(value)
        except (TypeError, ValueError) as e:
            raise self.fail(name, f"tolerance {name} must be a number") from e

    def digest(self) -> str:
        blob = json.dumps({"experiment": self.experiment, "seed": self.seed, "values": self.values},
                          sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class ExperimentResult:
    experiment: str
    passed: bool
    summary: dict
    curves: dict[str, list[tuple]] = field(default_factory=dict)
    histograms: dict[str, BallHistogram] = field(default_factory=dict)
    graph: tuple[Graph, int | None] | None = None
    trajectories: TrajectorySet | None = None

    def metrics(self) -> dict[str, float]:
        """Top-level numeric summary values, for the run ledger."""
        out = {}
        for key, value in self.summary.items():
            if isinstance(value, (bool, np.bool_)):
                out[key] = float(bool(value))
            elif isinstance(value, (int, float, np.integer, np.floating)) and math.isfinite(float(value)):
                out[key] = float(value)
        return out


def _finish(cfg: ExperimentConfig, passed: bool, summary: dict, **extra) -> ExperimentResult:
    body = {"experiment": cfg.experiment, "seed": cfg.seed, "passed": bool(passed), **summary}
    logger.info("%s finished: %s", cfg.experiment, "pass" if passed else "FAIL")
    return ExperimentResult(cfg.experiment, bool(passed), body, **extra)


def _strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


# --- config-driven building blocks ---

def _spec_get(cfg: ExperimentConfig, spec: Mapping, key: str, default: Any, kind: Callable[[Any], Any]) -> Any:
    if key not in spec and default is None:
        raise cfg.fail(key, f"missing required key {key!r}")
    return cfg._cast(key, spec.get(key, default), kind, kind.__name__)


def build_graph(cfg: ExperimentConfig, spec: Mapping, seed: int) -> tuple[Graph, int | None]:
    kind = spec.get("kind", "er")
    if kind == "er":
        n = _spec_get(cfg, spec, "n", None, int)
        if "p" in spec:
            p = _spec_get(cfg, spec, "p", None, float)
        else:
            p = min(1.0, _spec_get(cfg, spec, "theta", None, float) / n)
        return gen_erdos_renyi(n, p, seed), None
    if kind == "gnm":
        return gen_gnm(_spec_get(cfg, spec, "n", None, int), _spec_get(cfg, spec, "m", None, int), seed), None
    if kind == "configuration":
        if "degrees" in spec:
            degrees = [int(d) for d in spec["degrees"]]
        else:
            n = _spec_get(cfg, spec, "n", None, int)
            rho = DegreeDist.from_spec(_spec_get(cfg, spec, "rho", None, str))
            degrees = make_rng(seed, TAG_GRAPH, 9).choice(rho.probabilities.size, size=n, p=rho.probabilities)
            if int(degrees.sum()) % 2:
                degrees[-1] += 1
            degrees = degrees.tolist()
        return gen_configuration_model(degrees, seed), None
    if kind == "regular":
        return gen_random_regular(_spec_get(cfg, spec, "n", None, int), _spec_get(cfg, spec, "k", None, int), seed), None
    if kind == "lattice":
        box = gen_lattice_box(_spec_get(cfg, spec, "dim", 2, int), _spec_get(cfg, spec, "radius", None, int))
        return box.graph, box.root
    if kind == "regular_tree":
        tree = gen_regular_tree(_spec_get(cfg, spec, "k", 3, int), _spec_get(cfg, spec, "height", None, int))
        return tree.graph, tree.root
    if kind == "canopy":
        canopy = gen_canopy_truncation(
            _spec_get(cfg, spec, "d", 3, int),
            _spec_get(cfg, spec, "levels", None, int),
            base_width=_spec_get(cfg, spec, "base_width", 1, int),
            root_level=_spec_get(cfg, spec, "root_level", 0, int),
        )
        return canopy.graph, canopy.root
    if kind == "path":
        n = _spec_get(cfg, spec, "n", None, int)
        return path_graph(n), None
    raise cfg.fail("kind", f"unknown graph kind {kind!r}")


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def graph_sampler(cfg: ExperimentConfig, spec: Mapping, n: int) -> Callable[[int], Graph]:
    sized = {**spec, "n": n}
    return lambda seed: build_graph(cfg, sized, seed)[0]


def limit_law(cfg: ExperimentConfig, spec: Mapping) -> DegreeDist:
    """Degree law of the local limit of the random graph family in `spec`."""
    kind = spec.get("kind", "er")
    if kind == "er":
        if "theta" not in spec:
            raise cfg.fail("theta", "the limit of an ER family needs theta = n p")
        return DegreeDist.poisson(_spec_get(cfg, spec, "theta", None, float))
    if kind == "configuration":
        return DegreeDist.from_spec(_spec_get(cfg, spec, "rho", None, str))
    if kind == "regular":
        return DegreeDist.point_mass(_spec_get(cfg, spec, "k", None, int))
    raise cfg.fail("kind", f"graph kind {kind!r} has no Galton-Watson limit")


def build_model(cfg: ExperimentConfig, key: str = "model", default: Mapping | None = None) -> Model:
    spec = cfg.section(key, default or {"name": "voter"})
    try:
        return builtin_model(spec.get("name", "voter"), spec.get("params", {}))
    except ValidationError as e:
        raise cfg.fail(key, str(e)) from e


def _require_discrete(cfg: ExperimentConfig, model: Model, key: str = "model") -> DiscreteModel:
    if not isinstance(model, DiscreteModel):
        raise cfg.fail(key, f"{cfg.experiment} needs a discrete-time model, got {model.name}")
    return model


def init_sampler(cfg: ExperimentConfig, model: Model) -> InitSampler:
    spec = cfg.section("init", {"kind": "iid"})
    kind = spec.get("kind", "iid")
    vector = isinstance(model, DiffusionModel) or model.kind == "vector"
    dim = model.dimension
    if kind == "constant":
        if vector:
            value = _spec_get(cfg, spec, "value", 0.0, float)
            return lambda g, s: np.full((g.vertex_count, dim), value)
        symbol = _spec_get(cfg, spec, "value", 0, int)
        return lambda g, s: np.full(g.vertex_count, symbol, dtype=np.int64)
    if kind == "iid":
        if vector:
            scale = _spec_get(cfg, spec, "scale", 1.0, float)
            # initial conditions are kept in a bounded ball
            clamp = _spec_get(cfg, spec, "clamp", 3.0 * scale, float)
            return lambda g, s: np.clip(make_rng(s, TAG_MARKS).normal(0.0, scale, (g.vertex_count, dim)), -clamp, clamp)
        lam = spec.get("lambda", [0.5, 0.5])
        alphabet = spec.get("alphabet", list(model.alphabet) if model.alphabet else list(range(len(lam))))
        return lambda g, s: iid_sample(g, lam, s, alphabet).astype(np.int64)
    if kind == "gibbs":
        if vector:
            raise cfg.fail("init", "Gibbs initial conditions need a finite alphabet")
        if "spec_path" in spec and cfg.gibbs_loader is not None:
            gspec = cfg.gibbs_loader(_spec_get(cfg, spec, "spec_path", None, str))
        elif "spec" in spec:
            try:
                gspec = GibbsSpec.from_dict(spec["spec"])
            except (ValidationError, TypeError, ValueError) as e:
                raise cfg.fail("spec", str(e)) from e
        else:
            ising = ising_spec(_spec_get(cfg, spec, "beta", 0.2, float), _spec_get(cfg, spec, "field", 0.0, float))
            try:
                gspec = GibbsSpec(tuple(spec.get("alphabet", (0, 1))), ising.psi, ising.lam)
            except (ValidationError, TypeError, ValueError) as e:
                raise cfg.fail("alphabet", str(e)) from e
        sweeps = _spec_get(cfg, spec, "sweeps", 10, int)
        burn_in = _spec_get(cfg, spec, "burn_in", None, int) if "burn_in" in spec else None
        return lambda g, s: glauber_sample(g, gspec, sweeps, s, burn_in=burn_in).astype(np.int64)
    if kind == "csv" and cfg.marks_loader is not None:
        if "path" not in spec:
            raise cfg.fail("init", "a csv initial condition needs a path")
        path = str(spec["path"])
        return lambda g, s: cfg.marks_loader(path, g.vertex_count)
    raise cfg.fail("kind", f"unknown initial condition kind {kind!r}")


def _horizon(cfg: ExperimentConfig, model: Model, default: float) -> tuple[float, float | None]:
    if isinstance(model, DiscreteModel):
        return float(cfg.integer("horizon", int(default), minimum=0)), None
    return cfg.real("horizon", default), cfg.real("dt", 0.01)


# --- experiments ---

def run_graph_gen(cfg: ExperimentConfig) -> ExperimentResult:
    spec = cfg.section("graph", {"kind": "er", "n": 100, "p": 0.0})
    g, root = build_graph(cfg, spec, cfg.seed)
    deg = g.degrees()
    hist = np.bincount(deg) if deg.size else np.zeros(0, dtype=np.int64)
    labels = component_labels(g)
    summary = {
        "graph": spec,
        "vertex_count": g.vertex_count,
        "edge_count": g.edge_count,
        "erased": g.erased,
        "root": root,
        "component_count": int(labels.max()) + 1 if labels.size else 0,
        "largest_component": largest_component(g).vertex_count if g.vertex_count else 0,
        "degree_histogram": {str(k): int(c) for k, c in enumerate(hist.tolist()) if c},
    }
    return _finish(cfg, True, summary, graph=(g, root))


def run_duality(cfg: ExperimentConfig) -> ExperimentResult:
    poisson_theta = cfg.real("theta", 0.0) if "theta" in cfg.values else None
    if poisson_theta is not None:
        rho = DegreeDist.poisson(poisson_theta)
    else:
        try:
            rho = DegreeDist.from_spec(cfg.text("rho", "poisson:2"))
        except ValidationError as e:
            raise cfg.fail("rho", str(e)) from e
        if rho.label.startswith("poisson:"):
            poisson_theta = float(rho.label.split(":", 1)[1])
    try:
        report = dual_distribution(rho)
    except ValidationError as e:
        raise cfg.fail("theta" if poisson_theta is not None else "rho", str(e)) from e
    summary = report.to_dict()
    summary["rho"] = rho.label
    passed = True
    if poisson_theta is not None:
        closed = poisson_dual(poisson_theta)
        identity = abs(closed * math.exp(-closed) - poisson_theta * math.exp(-poisson_theta))
        tv = report.dual.tv(DegreeDist.poisson(closed))
        product = abs(poisson_theta * report.beta - closed)
        summary.update(
            poisson_dual_theta=closed,
            identity_residual=identity,
            tv_to_poisson=tv,
            theta_beta_gap=product,
        )
        passed = (
            identity < cfg.tolerance("identity", 1e-12)
            and tv < cfg.tolerance("tv", 1e-8)
            and product < cfg.tolerance("theta_beta", 1e-8)
        )
    return _finish(cfg, passed, summary)


def run_lwc_test(cfg: ExperimentConfig) -> ExperimentResult:
    spec = cfg.section("graph", {"kind": "er", "theta": 2.0})
    rho = limit_law(cfg, spec)
    radius = cfg.integer("radius", 2, minimum=0)
    sizes = cfg.integers("sizes", [300, 1000, 3000, 10000])
    samples = cfg.integer("limit_samples", 100_000, minimum=1)
    tol = cfg.tolerance("tv", 0.05)
    limit = sample_ball_histogram(lambda s: sample_ugw(rho, radius, s), radius, samples,
                                  derive_seed(cfg.seed, TAG_TREE), cfg.threads)
    rows = []
    for n in sizes:
        g = graph_sampler(cfg, spec, n)(derive_seed(cfg.seed, TAG_GRAPH, n))
        tv = histogram_tv(neighborhood_histogram(g, radius, cfg.threads), limit)
        logger.info("n=%d: ball-histogram TV %.4f", n, tv)
        rows.append((n, tv, None))
    values = [r[1] for r in rows]
    passed = _strictly_decreasing(values) and values[-1] < tol
    summary = {
        "radius": radius,
        "sizes": sizes,
        "tv": values,
        "final_tv": values[-1],
        "decreasing": _strictly_decreasing(values),
        "limit_classes": len(limit.counts),
    }
    return _finish(cfg, passed, summary, curves={"tv": rows}, histograms={"limit": limit})


def run_emp_test(cfg: ExperimentConfig) -> ExperimentResult:
    model = build_model(cfg)
    init = init_sampler(cfg, model)
    horizon, dt = _horizon(cfg, model, 4)
    spec = cfg.section("graph", {"kind": "er", "theta": 1.5})
    rho = limit_law(cfg, spec)
    sizes = cfg.integers("sizes", [1000, 3000, 10000])
    replicas = cfg.integer("replicas", 100_000, minimum=1)
    tol = cfg.tolerance("distance", 0.05)
    discrete = isinstance(model, DiscreteModel)
    depth = int(horizon) if discrete else cfg.integer("depth", 6, minimum=1)
    depth = max(depth, cfg.integer("depth", depth))
    limit = root_law_monte_carlo(
        lambda s: sample_ugw(rho, depth, s), init, model, horizon, replicas, derive_seed(cfg.seed, TAG_TREE),
        dt=dt, depth=depth, threads=cfg.threads,
    )
    rows, ts = [], None
    for n in sizes:
        g = graph_sampler(cfg, spec, n)(derive_seed(cfg.seed, TAG_GRAPH, n))
        marks = init(g, derive_seed(cfg.seed, TAG_MARKS, n))
        ts = simulate(g, marks, model, horizon, seed=derive_seed(cfg.seed, TAG_DYNAMICS, n), dt=dt)
        emp = global_empirical(ts)
        if discrete:
            dist = tv_discrete(emp, limit)
        else:
            dist = wasserstein1_paths(emp, limit, horizon, derive_seed(cfg.seed, TAG_SUBSAMPLE, n))
        logger.info("n=%d: distance to the root law %.4f", n, dist)
        rows.append((n, dist, None))
    values = [r[1] for r in rows]
    summary = {
        "model": model.name,
        "horizon": horizon,
        "tree_depth": depth,
        "sizes": sizes,
        "distance": values,
        "final_distance": values[-1],
        "decreasing": _strictly_decreasing(values),
        "metric": "tv" if discrete else "w1",
    }
    if not discrete:
        summary["depth_sensitivity_w1"] = depth_sensitivity(
            lambda d: (lambda s: sample_ugw(rho, d, s)), depth, init, model, horizon,
            cfg.integer("sensitivity_replicas", min(replicas, 2000), minimum=1),
            derive_seed(cfg.seed, TAG_TREE, 1), dt, threads=cfg.threads,
        )
    passed = summary["decreasing"] and values[-1] < tol
    return _finish(cfg, passed, summary, curves={"distance": rows}, trajectories=ts, graph=(ts.graph, None))


def _time_k_fraction(model: Model, horizon: float) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(model, DiscreteModel) and model.kind == "discrete":
        k = int(horizon)
        return lambda paths: (paths[:, k] == 1).astype(np.float64)
    return lambda paths: np.tanh(paths[:, -1, 0])


def run_comp_emp_test(cfg: ExperimentConfig) -> ExperimentResult:
    model = build_model(cfg)
    init = init_sampler(cfg, model)
    horizon, dt = _horizon(cfg, model, 4)
    f = _time_k_fraction(model, horizon)
    draws = cfg.integer("root_draws", 2000, minimum=100)

    # subcritical: component functional against whole finite limit trees
    theta_sub = cfg.real("theta_sub", 0.5)
    n_sub = cfg.integer("n_sub", 2000, minimum=1)
    sub = component_functional_distribution(
        graph_sampler(cfg, {"kind": "er", "theta": theta_sub}, n_sub), init, model, f, horizon, draws,
        derive_seed(cfg.seed, TAG_GRAPH, 1), dt=dt, threads=cfg.threads,
    )
    rho_sub = DegreeDist.poisson(theta_sub)
    tree_depth = cfg.integer("tree_depth", 10_000, minimum=1)
    tree_side = tree_functional_distribution(
        lambda s: sample_ugw(rho_sub, tree_depth, s), init, model, f, horizon, draws,
        derive_seed(cfg.seed, TAG_TREE, 1), dt=dt, threads=cfg.threads,
    )
    ks = float(stats.ks_2samp(sub.values, tree_side).statistic)

    # supercritical: giant hits and the giant-conditioned empirical measure
    theta_sup = cfg.real("theta_super", 2.0)
    n_sup = cfg.integer("n_super", 10_000, minimum=1)
    rho_sup = DegreeDist.poisson(theta_sup)
    s = survival_prob(rho_sup)
    n_giant = cfg.integer("n_giant", 20_000, minimum=1)
    giant_mean, giant_stderr = giant_fraction(
        graph_sampler(cfg, {"kind": "er", "theta": theta_sup}, n_giant), n_giant,
        cfg.integer("giant_replicas", 10, minimum=1), derive_seed(cfg.seed, TAG_GRAPH, 4), threads=cfg.threads,
    )
    sampler = graph_sampler(cfg, {"kind": "er", "theta": theta_sup}, n_sup)
    sup = component_functional_distribution(
        sampler, init, model, f, horizon, draws, derive_seed(cfg.seed, TAG_GRAPH, 2), dt=dt, threads=cfg.threads,
    )
    g = sampler(derive_seed(cfg.seed, TAG_GRAPH, 3))
    ts = simulate(g, init(g, derive_seed(cfg.seed, TAG_MARKS, 3)), model, horizon,
                  seed=derive_seed(cfg.seed, TAG_DYNAMICS, 3), dt=dt)
    giant_measure = component_empirical(ts, largest_component(g))
    depth = int(horizon) if isinstance(model, DiscreteModel) else cfg.integer("depth", 6, minimum=1)
    infinite_tree = root_law_monte_carlo(
        lambda sd: sample_ugw_conditioned(rho_sup, depth, sd, survive=True), init, model, horizon,
        cfg.integer("replicas", 100_000, minimum=1), derive_seed(cfg.seed, TAG_TREE, 2), dt=dt, threads=cfg.threads,
    )
    if giant_measure.kind == "discrete":
        giant_distance = tv_discrete(giant_measure, infinite_tree)
    else:
        giant_distance = wasserstein1_paths(giant_measure, infinite_tree, horizon, derive_seed(cfg.seed, TAG_SUBSAMPLE))

    summary = {
        "model": model.name,
        "horizon": horizon,
        "ks_subcritical": ks,
        "survival": s,
        "giant_mean": giant_mean,
        "giant_stderr": giant_stderr,
        "giant_gap": abs(giant_mean - s),
        "giant_hit_fraction": sup.giant_fraction,
        "giant_hit_gap": abs(sup.giant_fraction - s),
        "giant_distance": giant_distance,
        "mean_component_size_subcritical": float(sub.component_sizes.mean()),
    }
    passed = (
        ks < cfg.tolerance("ks", 0.05)
        and summary["giant_gap"] <= cfg.tolerance("giant", 0.02)
        and summary["giant_hit_gap"] <= cfg.tolerance("giant_fraction", 0.03)
        and giant_distance < cfg.tolerance("giant_distance", 0.07)
    )
    return _finish(cfg, passed, summary)


def _locality_check(cfg: ExperimentConfig, summary: dict) -> bool:
    model = _require_discrete(cfg, build_model(cfg))
    init = init_sampler(cfg, model)
    box = gen_lattice_box(2, cfg.integer("lattice_radius", 10, minimum=1))
    g = box.graph
    marks = init(g, derive_seed(cfg.seed, TAG_MARKS))
    pairs = cfg.integer("locality_pairs", 50, minimum=1)
    k_max = cfg.integer("locality_k_max", 4, minimum=1)
    rng = make_rng(cfg.seed, TAG_SUBSAMPLE)
    vertices = rng.integers(g.vertex_count, size=pairs)
    steps = rng.integers(1, k_max + 1, size=pairs)
    base = NoiseSource(derive_seed(cfg.seed, TAG_DYNAMICS))
    reference = simulate_discrete(g, marks, model, k_max, noise=base)

    def unchanged(item: tuple[int, int]) -> bool:
        v, k = item
        inside = graph_distances(g, [v], limit=k) >= 0
        streams = np.where(inside, PRIMARY_STREAM, FRESH_STREAM)
        other = simulate_discrete(g, marks, model, k, noise=base.with_streams(streams))
        return bool(np.array_equal(reference.paths[v, : k + 1], other.paths[v]))

    identical = sum(map_ordered(unchanged, list(zip(vertices.tolist(), steps.tolist())), cfg.threads))

    horizon = cfg.integer("zero_horizon", 2, minimum=0)
    distances = sorted(cfg.integers("zero_distances", [5, 6, 8]))
    if distances[0] <= 2 * horizon:
        raise cfg.fail("zero_distances", f"zero-covariance distances must exceed 2k = {2 * horizon}")
    if distances[-1] > box.radius:
        raise cfg.fail("zero_distances", f"distance {distances[-1]} does not fit in the lattice radius {box.radius}")
    pairs_at = [([box.root], [box.index_of((d,) + (0,) * (box.dim - 1))], d) for d in distances]
    profile = covariance_decay_profile(
        g, marks, model, pairs_at, horizon, cfg.integer("zero_replicas", 2000, minimum=100),
        derive_seed(cfg.seed, TAG_DYNAMICS, 1), threads=cfg.threads,
        confidence=cfg.real("zero_confidence", 0.999),
    )
    covered = [abs(p.estimate) <= p.ci_half_width for p in profile.points]
    summary.update(
        locality_pairs=pairs,
        locality_identical=identical,
        zero_covariance=[[p.distance, p.estimate, p.ci_half_width] for p in profile.points],
        zero_covariance_covered=all(covered),
    )
    return identical == pairs and all(covered)


def _decay_check(cfg: ExperimentConfig, summary: dict, curves: dict) -> bool:
    model = build_model(cfg, "decay_model", {"name": "consensus_sde", "params": {"sigma0": 1.0}})
    n = cfg.integer("path_length", 40, minimum=2)
    anchor = cfg.integer("anchor", 10, minimum=0)
    distances = sorted(cfg.integers("distances", [2, 4, 6, 8, 10]))
    if anchor + distances[-1] >= n:
        raise cfg.fail("distances", f"anchor {anchor} + distance {distances[-1]} leaves the {n}-vertex path")
    g = path_graph(n)
    if isinstance(model, DiffusionModel):
        marks = np.zeros((n, model.dimension))
        horizon, dt = cfg.real("decay_horizon", 1.0), cfg.real("dt", 1e-3)
    else:
        marks = init_sampler(cfg, model)(g, derive_seed(cfg.seed, TAG_MARKS, 2))
        horizon, dt = float(cfg.integer("decay_horizon", 3, minimum=0)), None
    profile = covariance_decay_profile(
        g, marks, model, [([anchor], [anchor + d], d) for d in distances], horizon,
        cfg.integer("replicas", 10_000, minimum=100), derive_seed(cfg.seed, TAG_DYNAMICS, 2),
        dt=dt, threads=cfg.threads,
    )
    est, half = np.abs(profile.estimates), profile.half_widths
    monotone = all(est[i + 1] <= est[i] + half[i] + half[i + 1] for i in range(est.size - 1))
    c = fit_factorial_envelope(distances[0], float(profile.estimates[0]))
    envelope = factorial_envelope(c, distances)
    start = cfg.integer("envelope_from", 6)
    below = all(e <= env + h for d, e, env, h in zip(distances, est, envelope, half) if d >= start)
    curves["decay"] = [(p.distance, p.estimate, p.ci_half_width) for p in profile.points]
    curves["envelope"] = [(d, float(v), None) for d, v in zip(distances, envelope)]
    summary.update(
        decay_model=model.name,
        decay=[[p.distance, p.estimate, p.ci_half_width] for p in profile.points],
        decay_monotone=monotone,
        envelope_c=c,
        envelope_respected=below,
    )
    return monotone and below


def run_corr_decay(cfg: ExperimentConfig) -> ExperimentResult:
    parts = cfg.values.get("parts", ["locality", "decay"])
    if not isinstance(parts, list) or not set(parts) <= {"locality", "decay"} or not parts:
        raise cfg.fail("parts", "parts must be a nonempty subset of ['locality', 'decay']")
    summary: dict = {"parts": parts}
    curves: dict = {}
    passed = True
    if "locality" in parts:
        passed &= _locality_check(cfg, summary)
    if "decay" in parts:
        passed &= _decay_check(cfg, summary, curves)
    return _finish(cfg, passed, summary, curves=curves)


def run_tree_counterexample(cfg: ExperimentConfig) -> ExperimentResult:
    model = _require_discrete(cfg, build_model(cfg))
    init = init_sampler(cfg, model)
    d = cfg.integer("d", 3, minimum=3)
    height = cfg.integer("height", 12, minimum=1)
    k = cfg.integer("horizon", 3, minimum=0)
    replicas = cfg.integer("replicas", 20_000, minimum=1)
    max_level = cfg.integer("max_level", 10, minimum=0)
    tree = gen_regular_tree(d, height)
    ts = simulate_discrete(tree.graph, init(tree.graph, derive_seed(cfg.seed, TAG_MARKS)), model, k,
                           seed=derive_seed(cfg.seed, TAG_DYNAMICS))
    finite = global_empirical(ts)
    ball_tree = gen_regular_tree(d, k)
    regular_law = root_law_monte_carlo(lambda s: ball_tree, init, model, k, replicas,
                                       derive_seed(cfg.seed, TAG_TREE, 1), depth=k, threads=cfg.threads)
    canopy_law = canopy_mixture_root_law(d, init, model, k, replicas, derive_seed(cfg.seed, TAG_TREE, 2),
                                         max_level=max_level, threads=cfg.threads)
    tv_regular = tv_discrete(finite, regular_law)
    tv_canopy = tv_discrete(finite, canopy_law)
    summary = {"d": d, "height": height, "horizon": k, "tv_regular_tree": tv_regular, "tv_canopy_mixture": tv_canopy}
    passed = tv_regular > cfg.tolerance("regular_gap", 0.1) and tv_canopy < cfg.tolerance("canopy", 0.05)
    return _finish(cfg, passed, summary, trajectories=ts, graph=(tree.graph, tree.root))


def run_lattice_test(cfg: ExperimentConfig) -> ExperimentResult:
    model = _require_discrete(cfg, build_model(cfg))
    init = init_sampler(cfg, model)
    dim = cfg.integer("dim", 2, minimum=1)
    k = cfg.integer("horizon", 3, minimum=0)
    radii = cfg.integers("sizes", [4, 8, 16, 32])
    law = lattice_root_law(dim, init, model, k, cfg.integer("replicas", 20_000, minimum=1),
                           derive_seed(cfg.seed, TAG_TREE), threads=cfg.threads)
    rows, ts, box = [], None, None
    for radius in radii:
        box = gen_lattice_box(dim, radius)
        ts = simulate_discrete(box.graph, init(box.graph, derive_seed(cfg.seed, TAG_MARKS, radius)), model, k,
                               seed=derive_seed(cfg.seed, TAG_DYNAMICS, radius))
        rows.append((radius, tv_discrete(global_empirical(ts), law), None))
    values = [r[1] for r in rows]
    summary = {"dim": dim, "horizon": k, "radii": radii, "tv": values, "final_tv": values[-1],
               "decreasing": _strictly_decreasing(values)}
    passed = summary["decreasing"] and values[-1] < cfg.tolerance("tv", 0.1)
    return _finish(cfg, passed, summary, curves={"tv": rows}, trajectories=ts, graph=(box.graph, box.root))


def run_ergodicity(cfg: ExperimentConfig) -> ExperimentResult:
    model = _require_discrete(cfg, build_model(cfg))
    init = init_sampler(cfg, model)
    dim = cfg.integer("dim", 2, minimum=1)
    box = gen_lattice_box(dim, cfg.integer("lattice_radius", 32, minimum=1))
    k = cfg.integer("horizon", 5, minimum=0)
    window = cfg.integer("window", 2, minimum=0)
    sizes = cfg.integers("box_sizes", [4, 8, 16, 32])
    replicas = cfg.integer("replicas", 50, minimum=20)
    f = window_mean(window, step=k)

    def one(r: int) -> list[float]:
        marks = init(box.graph, derive_seed(cfg.seed, TAG_MARKS, r))
        ts = simulate_discrete(box.graph, marks, model, k, seed=derive_seed(cfg.seed, TAG_DYNAMICS, r))
        return shift_average(ts, box, f, sizes)

    averages = map_ordered(one, range(replicas), cfg.threads)
    curve = ergodicity_variance_curve(averages, sizes)
    volumes = [m**dim for m, _ in curve]
    variances = [v for _, v in curve]
    if min(variances) <= 0:
        slope = float("nan")
        passed = False
    else:
        slope, _ = fit_log_slope(volumes, variances)
        lo, hi = cfg.real("slope_min", -1.3), cfg.real("slope_max", -0.7)
        passed = lo <= slope <= hi
    summary = {"dim": dim, "horizon": k, "window": window, "box_sizes": sizes, "variances": variances, "log_slope": slope}
    return _finish(cfg, passed, summary, curves={"variance": [(m, v, None) for m, v in curve]})


GIBBS_TEST_GRAPHS = {
    "cycle_with_chord": [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (0, 2)],
    "tree": [(0, 1), (0, 2), (2, 3), (2, 4)],
}


def _gibbs_identities(g: Graph, spec: GibbsSpec, region: Sequence[int]) -> tuple[float, float, float]:
    """Largest deviations in the Markov field property, detailed balance and the A = V kernel."""
    exact = exact_gibbs(g, spec)
    n = g.vertex_count
    rest = [v for v in range(n) if v not in region]
    rim = {u for v in region for u in g.neighbors(v).tolist() if u not in region}
    mrf = 0.0
    for idx in range(spec.size ** len(rest)):
        digits = np.unravel_index(idx, (spec.size,) * len(rest)) if rest else ()
        outside = {v: spec.alphabet[int(d)] for v, d in zip(rest, digits)}
        try:
            full = exact.conditional(outside)
        except ValidationError:
            continue  # zero-probability boundary
        local = conditional_kernel(g, spec, region, {v: outside[v] for v in rim})
        mrf = max(mrf, float(np.abs(full.probabilities - local.probabilities).max()))
    balance = 0.0
    for idx in range(exact.state_count):
        c = exact.configuration(idx)
        p = exact.probabilities[idx]
        for v in range(n):
            forward = single_site_kernel(g, spec, c, v)
            for s_idx, symbol in enumerate(spec.alphabet):
                if symbol == c[v]:
                    continue
                c2 = c.copy()
                c2[v] = symbol
                back = single_site_kernel(g, spec, c2, v)
                lhs = p * forward[s_idx]
                rhs = exact.probability(c2) * back[tuple(spec.alphabet).index(c[v].item())]
                balance = max(balance, abs(lhs - rhs))
    whole = conditional_kernel(g, spec, range(n), {})
    return mrf, balance, float(np.abs(whole.probabilities - exact.probabilities).max())


def run_gibbs_check(cfg: ExperimentConfig) -> ExperimentResult:
    beta = cfg.real("beta", 0.4)
    spec = ising_spec(beta, cfg.real("field", 0.0))
    box = gen_lattice_box(2, cfg.integer("grid_radius", 1, minimum=1))
    g = box.graph
    exact = exact_gibbs(g, spec)
    plus = tuple(spec.alphabet).index(1)
    exact_plus = exact.marginals()[:, plus]
    chains = glauber_chains(g, spec, cfg.integer("sweeps", 5, minimum=1), derive_seed(cfg.seed, TAG_DYNAMICS),
                            burn_in=cfg.integer("burn_in", 50, minimum=0),
                            chains=cfg.integer("chains", 100_000, minimum=1))
    sampled_plus = (chains == 1).mean(axis=0)
    marginal_gap = float(np.abs(sampled_plus - exact_plus).max())

    edges = g.edges()
    spins = spec.symbols.astype(np.float64)
    weights = exact.probabilities
    corr_gap = 0.0
    for u, v in edges.tolist():
        exact_corr = 0.0
        for start in range(0, exact.state_count, 1 << 16):
            idx = np.arange(start, min(start + (1 << 16), exact.state_count))
            d = exact.digits(idx)
            exact_corr += float((spins[d[:, u]] * spins[d[:, v]] * weights[idx]).sum())
        sampled_corr = float((chains[:, u] * chains[:, v]).mean())
        corr_gap = max(corr_gap, abs(sampled_corr - exact_corr))

    identities = {}
    region = cfg.integers("mrf_region", [1, 2])
    for name, edge_list in GIBBS_TEST_GRAPHS.items():
        small = Graph.from_edges(5, edge_list)
        mrf, balance, whole = _gibbs_identities(small, spec, region)
        identities[name] = {"mrf": mrf, "detailed_balance": balance, "full_region_kernel": whole}
    worst = max(max(v.values()) for v in identities.values())
    summary = {
        "beta": beta,
        "states": exact.state_count,
        "log_partition": exact.log_partition,
        "marginal_gap": marginal_gap,
        "correlation_gap": corr_gap,
        "identities": identities,
        "identity_gap": worst,
    }
    passed = (
        marginal_gap <= cfg.tolerance("marginal", 0.01)
        and corr_gap <= cfg.tolerance("correlation", 0.02)
        and worst <= cfg.tolerance("identity", 1e-12)
    )
    return _finish(cfg, passed, summary)


def run_integrator_check(cfg: ExperimentConfig) -> ExperimentResult:
    dts = cfg.reals("dts", [1e-2, 5e-3, 2.5e-3])
    horizon = cfg.real("horizon", 1.0)
    factor = cfg.tolerance("error_factor", 5.0)
    model = builtin_model("consensus_sde", {"sigma0": 0.0})
    g = path_graph(2)
    rows, ts = [], None
    for dt in dts:
        ts = simulate_diffusion(g, np.array([[1.0], [-1.0]]), model, horizon, dt, seed=cfg.seed)
        gap = ts.paths[0, :, 0] - ts.paths[1, :, 0]
        error = float(np.abs(gap - 2.0 * np.exp(-2.0 * ts.times)).max())
        rows.append((dt, error, None))
    errors = [r[1] for r in rows]
    within = all(e <= factor * dt for dt, e in zip(dts, errors))
    shrinking = _strictly_decreasing(errors)
    summary = {"dts": dts, "max_errors": errors, "within_bound": within, "decreasing": shrinking}
    return _finish(cfg, within and shrinking, summary, curves={"error": rows}, trajectories=ts)


EXPERIMENTS: dict[str, Callable[[ExperimentConfig], ExperimentResult]] = {
    "graph-gen": run_graph_gen,
    "duality": run_duality,
    "lwc-test": run_lwc_test,
    "emp-test": run_emp_test,
    "comp-emp-test": run_comp_emp_test,
    "corr-decay": run_corr_decay,
    "tree-counterexample": run_tree_counterexample,
    "lattice-test": run_lattice_test,
    "ergodicity": run_ergodicity,
    "gibbs-check": run_gibbs_check,
    "integrator-check": run_integrator_check,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    logger.info("running %s (seed %d, %d thread(s))", cfg.experiment, cfg.seed, cfg.threads)
    return EXPERIMENTS[cfg.experiment](cfg)
