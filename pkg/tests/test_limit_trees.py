from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import special

from business.graphs import graph_distances, tree_height
from business.limit_trees import (
    DegreeDist,
    dual_alpha,
    dual_distribution,
    extinction_fixed_point,
    h_function,
    poisson_dual,
    sample_gw,
    sample_ugw,
    sample_ugw_conditioned,
    size_biased,
    survival_prob,
    theta,
)
from business.validators import ValidationError


def _lambert_dual(th):
    # principal branch: -W(-th e^-th) is the root below 1
    return float(-special.lambertw(-th * math.exp(-th), 0).real)


def test_poisson_truncation_sums_to_one():
    rho = DegreeDist.poisson(2.0)
    assert abs(rho.probabilities.sum() - 1.0) < 1e-15
    assert abs(rho.mean - 2.0) < 1e-9
    assert rho.label == "poisson:2"


def test_from_spec_forms():
    assert DegreeDist.from_spec("delta:3").probabilities.tolist() == [0.0, 0.0, 0.0, 1.0]
    mixed = DegreeDist.from_spec("0:0.2,1:0.2,3:0.6")
    assert mixed.k_max == 3 and abs(mixed.mean - 2.0) < 1e-12
    heavy = DegreeDist.from_spec("powerlaw:2.5:100")
    assert not heavy.finite_second_moment
    with pytest.raises(ValidationError):
        DegreeDist.from_spec("poisson:abc")


def test_rejects_bad_probabilities():
    with pytest.raises(ValidationError):
        DegreeDist(np.array([0.5, 0.6]))
    with pytest.raises(ValidationError):
        DegreeDist(np.array([-0.1, 1.1]))


def test_input_array_is_copied():
    p = np.array([0.25, 0.75])
    rho = DegreeDist(p)
    p[0] = 0.9
    assert rho.probabilities[0] == 0.25


def test_size_biased_and_theta():
    rho = DegreeDist.from_mapping({1: 0.5, 3: 0.5})
    hat = size_biased(rho)
    # hat_k = (k+1) rho_{k+1} / m with m = 2
    assert np.allclose(hat.probabilities, [0.25, 0.0, 0.75])
    assert abs(theta(rho) - hat.mean) < 1e-12
    assert abs(theta(DegreeDist.poisson(1.7)) - 1.7) < 1e-9


@pytest.mark.parametrize("th", [1.5, 2.0, 3.0])
def test_poisson_survival_matches_fixed_point(th):
    s = survival_prob(DegreeDist.poisson(th))
    assert abs(s - (1.0 - math.exp(-th * s))) < 1e-10


def test_survival_known_values():
    assert abs(survival_prob(DegreeDist.poisson(2.0)) - 0.7968121300200202) < 1e-9
    assert abs(survival_prob(DegreeDist.poisson(1.5)) - 0.5828222) < 1e-6
    assert survival_prob(DegreeDist.poisson(0.5)) == 0.0
    # every vertex has exactly one child along an edge: the tree is a line
    assert survival_prob(DegreeDist.point_mass(2)) == 1.0
    assert extinction_fixed_point(DegreeDist.point_mass(2)) == 0.0


def test_ugw_root_and_child_degrees():
    rho = DegreeDist.point_mass(3)
    tree = sample_ugw(rho, 4, seed=5)
    deg = tree.graph.degrees()
    assert deg[tree.root] == 3
    assert tree.vertex_count == 1 + 3 + 6 + 12 + 24
    assert tree_height(tree) == 4


def test_ugw_root_degree_law():
    rho = DegreeDist.from_mapping({1: 0.5, 2: 0.5})
    roots = [sample_ugw(rho, 1, seed=s).graph.degree(0) for s in range(4000)]
    # Binomial(4000, 1/2) share of degree-1 roots: sd ~ 32
    assert abs(roots.count(1) - 2000) < 160


def test_ugw_is_deterministic_and_budgeted():
    rho = DegreeDist.poisson(3.0)
    a, b = sample_ugw(rho, 6, seed=8), sample_ugw(rho, 6, seed=8)
    assert a.graph.same_as(b.graph)
    small = sample_ugw(DegreeDist.point_mass(3), 30, seed=8, vertex_budget=50)
    assert small.truncated and small.vertex_count <= 50


def test_gw_differs_from_ugw_at_root():
    law = DegreeDist.point_mass(2)
    tree = sample_gw(law, 3, seed=1)
    assert tree.graph.degree(tree.root) == 2
    assert tree.vertex_count == 15


def test_conditioned_on_survival_reaches_depth():
    rho = DegreeDist.poisson(2.0)
    for seed in range(50):
        tree = sample_ugw_conditioned(rho, 6, seed=seed, survive=True)
        dist = graph_distances(tree.graph, [tree.root])
        assert dist.max() == 6


def test_conditioned_on_extinction_matches_dual_root_degree():
    rho = DegreeDist.poisson(2.0)
    dual = dual_distribution(rho).dual
    draws = 6000
    degrees = np.asarray([sample_ugw_conditioned(rho, 1, seed=s, survive=False).graph.degree(0) for s in range(draws)])
    observed = np.bincount(degrees, minlength=4)[:4] / draws
    # dual law is Poisson(0.406): masses 0.666, 0.271, 0.055, 0.007; sd of each share <= 0.007
    assert np.all(np.abs(observed - dual.padded(4)[:4]) < 0.03)


def test_conditioning_impossible_events():
    with pytest.raises(ValidationError):
        sample_ugw_conditioned(DegreeDist.poisson(0.5), 3, seed=0, survive=True)
    with pytest.raises(ValidationError):
        sample_ugw_conditioned(DegreeDist.point_mass(2), 3, seed=0, survive=False)


@pytest.mark.parametrize("th", [1.5, 2.0, 3.0])
def test_poisson_duality_identities(th):
    rho = DegreeDist.poisson(th)
    report = dual_distribution(rho)
    closed = poisson_dual(th)
    assert abs(closed * math.exp(-closed) - th * math.exp(-th)) < 1e-12
    assert abs(closed - _lambert_dual(th)) < 1e-10
    assert abs(th * report.beta - closed) < 1e-8
    assert report.dual.tv(DegreeDist.poisson(closed)) < 1e-8
    assert abs(report.dual_theta - closed) < 1e-8


def test_duality_reference_values():
    report = dual_distribution(DegreeDist.poisson(2.0))
    assert abs(report.survival - 0.7968) < 1e-4
    assert abs(report.dual_theta - 0.4064) < 1e-4
    assert abs(h_function(DegreeDist.poisson(2.0), report.alpha)) < 1e-10
    assert set(report.to_dict()) == {"m", "theta", "survival", "alpha", "beta", "dual", "dual_theta"}


def test_h_vanishes_at_ends():
    rho = DegreeDist.from_mapping({1: 0.2, 3: 0.8})
    assert abs(h_function(rho, 0.0)) < 1e-12
    assert abs(h_function(rho, rho.mean / 2.0)) < 1e-12
    values = h_function(rho, np.array([0.1, 0.2]))
    assert values.shape == (2,)


def test_dual_of_general_law_is_subcritical():
    rho = DegreeDist.from_mapping({0: 0.2, 1: 0.2, 3: 0.6})
    report = dual_distribution(rho)
    assert 0.0 < report.alpha < rho.mean / 2.0
    assert report.dual_theta < 1.0
    assert abs(report.dual.probabilities.sum() - 1.0) < 1e-12
    assert dual_alpha(rho) == report.alpha


def test_duality_preconditions():
    with pytest.raises(ValidationError):
        dual_distribution(DegreeDist.poisson(0.8))
    with pytest.raises(ValidationError):
        dual_distribution(DegreeDist.power_law(2.5, 100))
    with pytest.raises(ValidationError):
        dual_distribution(DegreeDist.point_mass(3))
    with pytest.raises(ValidationError):
        poisson_dual(1.0)
