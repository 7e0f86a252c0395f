from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from business.graphs import Graph, gen_lattice_box
from business.gibbs import (
    GibbsSpec,
    StateSpaceError,
    boundary_of,
    conditional_kernel,
    exact_gibbs,
    glauber_chains,
    glauber_sample,
    iid_sample,
    ising_spec,
    log_weight,
    single_site_kernel,
    unnormalized_weight,
)
from business.validators import ValidationError


def _chord_cycle():
    return Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (0, 2)])


def _hard_core():
    return GibbsSpec((0, 1), [[1.0, 1.0], [1.0, 0.0]], [0.5, 0.5])


def test_spec_validation():
    with pytest.raises(ValidationError):
        GibbsSpec((0, 1), [[1.0, 2.0], [1.0, 1.0]], [0.5, 0.5])
    with pytest.raises(ValidationError):
        GibbsSpec((0, 1), [[1.0, 1.0], [1.0, 1.0]], [0.4, 0.4])
    with pytest.raises(ValidationError):
        GibbsSpec((0, 0), [[1.0, 1.0], [1.0, 1.0]], [0.5, 0.5])
    with pytest.raises(ValidationError):
        GibbsSpec((0, 1), [[0.0, 0.0], [0.0, 1.0]], [0.5, 0.5])


def test_spec_dict_form():
    spec = ising_spec(0.3)
    again = GibbsSpec.from_dict(spec.to_dict())
    assert again.alphabet == (-1, 1)
    assert np.allclose(again.psi, spec.psi)
    with pytest.raises(ValidationError):
        GibbsSpec.from_dict({"alphabet": [0, 1]})


def test_single_edge_ising():
    beta = 0.7
    g = Graph.from_edges(2, [(0, 1)])
    dist = exact_gibbs(g, ising_spec(beta))
    z = 2 * math.exp(beta) + 2 * math.exp(-beta)
    expected = np.array([math.exp(beta), math.exp(-beta), math.exp(-beta), math.exp(beta)]) / z
    assert np.allclose(dist.probabilities, expected, atol=1e-15)
    # lambda is uniform, so Z carries a factor 1/4
    assert abs(dist.log_partition - math.log(z / 4)) < 1e-12
    assert dist.configuration(1).tolist() == [-1, 1]
    assert dist.index_of([1, -1]) == 2


def test_partition_matches_brute_force():
    g = _chord_cycle()
    spec = GibbsSpec(("a", "b", "c"), [[2.0, 1.0, 0.5], [1.0, 1.0, 0.0], [0.5, 0.0, 3.0]], [0.2, 0.5, 0.3])
    dist = exact_gibbs(g, spec)
    total = math.fsum(math.exp(log_weight(g, spec, list(c))) for c in itertools.product(spec.alphabet, repeat=5))
    assert abs(dist.log_partition - math.log(total)) < 1e-12
    c = ["a", "c", "a", "b", "b"]
    assert abs(dist.probability(c) - unnormalized_weight(g, spec, c) / total) < 1e-15
    assert unnormalized_weight(g, spec, ["b", "c", "a", "a", "a"]) == 0.0


def test_marginals_of_zero_field_ising_are_uniform():
    dist = exact_gibbs(gen_lattice_box(2, 1).graph, ising_spec(0.4))
    assert np.allclose(dist.marginals(), 0.5, atol=1e-12)
    assert set(dist.marginal(4)) == {-1, 1}


def test_markov_field_property():
    g = _chord_cycle()
    spec = ising_spec(0.5, field=0.2)
    full = exact_gibbs(g, spec)
    region = [1, 2]
    assert boundary_of(g, region) == (0, 3)
    for outside in itertools.product((-1, 1), repeat=3):
        fixed = dict(zip((0, 3, 4), outside))
        law = full.conditional(fixed)
        local = conditional_kernel(g, spec, region, {0: fixed[0], 3: fixed[3]})
        assert law.vertices == local.vertices == (1, 2)
        assert np.max(np.abs(law.probabilities - local.probabilities)) < 1e-12


def test_kernel_on_whole_graph_is_the_gibbs_measure():
    g = _chord_cycle()
    spec = ising_spec(0.3)
    assert np.allclose(conditional_kernel(g, spec, range(5), {}).probabilities, exact_gibbs(g, spec).probabilities,
                       atol=1e-15)


def test_kernel_boundary_must_match():
    g = _chord_cycle()
    with pytest.raises(ValidationError, match="missing \\[3\\]"):
        conditional_kernel(g, ising_spec(0.3), [1, 2], {0: 1})
    with pytest.raises(ValidationError, match="extra \\[4\\]"):
        conditional_kernel(g, ising_spec(0.3), [1, 2], {0: 1, 3: 1, 4: 1})


def test_detailed_balance_of_single_site_kernel():
    g = _chord_cycle()
    spec = ising_spec(0.6, field=-0.3)
    dist = exact_gibbs(g, spec)
    worst = 0.0
    for idx in range(dist.state_count):
        c = dist.configuration(idx)
        for v in range(5):
            flipped = c.copy()
            flipped[v] = -c[v]
            forward = dist.probabilities[idx] * single_site_kernel(g, spec, c, v)[spec.alphabet.index(-int(c[v]))]
            backward = dist.probability(flipped) * single_site_kernel(g, spec, flipped, v)[spec.alphabet.index(int(c[v]))]
            worst = max(worst, abs(forward - backward))
    assert worst < 1e-12


def test_state_cap():
    g = Graph.from_edges(30, [])
    with pytest.raises(StateSpaceError):
        exact_gibbs(g, ising_spec(0.1), max_states=1000)


def test_glauber_matches_exact_marginals_and_correlations():
    g = gen_lattice_box(2, 1).graph
    spec = ising_spec(0.4, field=0.3)
    exact = exact_gibbs(g, spec)
    chains = glauber_chains(g, spec, sweeps=5, seed=3, burn_in=30, chains=20000)
    assert chains.shape == (20000, 9)
    plus = exact.marginals()[:, 1]
    # sd of each estimate is below 0.0036
    assert np.max(np.abs((chains == 1).mean(axis=0) - plus)) < 0.02
    weights = exact.probabilities
    digits = exact.digits(np.arange(exact.state_count))
    spins = spec.symbols[digits]
    for u, v in g.edges().tolist():
        exact_corr = float((spins[:, u] * spins[:, v] * weights).sum())
        assert abs(float((chains[:, u] * chains[:, v]).mean()) - exact_corr) < 0.03


def test_glauber_respects_hard_constraints():
    g = gen_lattice_box(2, 2).graph
    sample = glauber_chains(g, _hard_core(), sweeps=2, seed=1, burn_in=0, chains=50)
    u, v = g.edges().T
    assert not np.any((sample[:, u] == 1) & (sample[:, v] == 1))


def test_glauber_is_deterministic():
    g = _chord_cycle()
    a = glauber_sample(g, ising_spec(0.2), sweeps=3, seed=9)
    b = glauber_sample(g, ising_spec(0.2), sweeps=3, seed=9)
    assert np.array_equal(a, b)
    assert set(a.tolist()) <= {-1, 1}


def test_iid_sample():
    g = Graph.from_edges(20000, [])
    sample = iid_sample(g, [0.25, 0.75], seed=4, alphabet=["x", "y"])
    share = float(np.mean(sample == "y"))
    assert abs(share - 0.75) < 0.015
    with pytest.raises(ValidationError):
        iid_sample(g, [0.5, 0.5], seed=4, alphabet=[0, 1, 2])
