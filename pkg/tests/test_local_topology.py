from __future__ import annotations

import itertools

import networkx as nx
import numpy as np
import pytest

from business.graphs import Graph, MarkedGraph, RootedGraph, components, gen_erdos_renyi, gen_random_regular
from business.limit_trees import DegreeDist, sample_ugw
from business.local_topology import (
    SINGLE_VERTEX_CODE,
    BallHistogram,
    IsomorphismCapError,
    canonical_code,
    d_star_marked,
    d_star_unmarked,
    general_bottleneck_distance,
    histogram_from_balls,
    histogram_tv,
    lw_deficiency,
    marked_battery_gap,
    neighborhood_histogram,
    rooted_isomorphic,
    sample_ball_histogram,
    tree_bottleneck_distance,
)
from business.validators import ValidationError


def _rooted(n, edges, root):
    return RootedGraph(Graph.from_edges(n, edges), root)


def _nx(rg):
    g = nx.Graph()
    g.add_nodes_from((v, {"root": v == rg.root}) for v in range(rg.vertex_count))
    g.add_edges_from(map(tuple, rg.graph.edges().tolist()))
    return g


def _pool():
    pool = []
    for seed in range(12):
        g = gen_erdos_renyi(9, 0.35, seed=seed)
        for comp in components(g):
            if 2 <= comp.vertex_count <= 9:
                for root in range(min(comp.vertex_count, 3)):
                    pool.append(RootedGraph(comp.graph, root))
    return pool


def test_single_vertex_code():
    assert canonical_code(_rooted(1, [], 0)) == SINGLE_VERTEX_CODE


def test_tree_code_depends_on_root():
    path = [(0, 1), (1, 2)]
    assert canonical_code(_rooted(3, path, 0)) == canonical_code(_rooted(3, path, 2))
    assert canonical_code(_rooted(3, path, 0)) != canonical_code(_rooted(3, path, 1))


def test_codes_invariant_under_relabelling():
    rng = np.random.default_rng(0)
    for rg in _pool():
        perm = rng.permutation(rg.vertex_count)
        moved = RootedGraph(rg.graph.relabel(perm), int(perm[rg.root]))
        assert canonical_code(moved) == canonical_code(rg)


def test_codes_agree_with_brute_force_isomorphism():
    pool = _pool()
    match = nx.algorithms.isomorphism.categorical_node_match("root", False)
    for a, b in itertools.combinations(pool, 2):
        if a.vertex_count != b.vertex_count:
            continue
        expected = nx.is_isomorphic(_nx(a), _nx(b), node_match=match)
        assert rooted_isomorphic(a, b) == expected


def test_cycle_roots_are_equivalent():
    cycle = [(i, (i + 1) % 6) for i in range(6)]
    codes = {canonical_code(_rooted(6, cycle, r)) for r in range(6)}
    assert len(codes) == 1


def test_general_cap():
    clique = list(itertools.combinations(range(5), 2))
    with pytest.raises(IsomorphismCapError):
        canonical_code(_rooted(5, clique, 0), max_vertices=4)


def test_d_star_unmarked_interval():
    path = _rooted(5, [(0, 1), (1, 2), (2, 3), (3, 4)], 2)
    cherry = _rooted(3, [(0, 1), (0, 2)], 0)
    assert d_star_unmarked(path, path, 3) == (0.0, 0.125)
    lower, upper = d_star_unmarked(path, cherry, 3)
    # balls agree at radius 1 and differ from radius 2 on
    assert lower == 0.25 + 0.125
    assert upper == lower + 0.125


def test_d_star_marked_tree_and_general():
    path = _rooted(5, [(0, 1), (1, 2), (2, 3), (3, 4)], 2)
    plain = MarkedGraph(path, np.zeros(5, dtype=np.int64))
    flagged = MarkedGraph(path, np.array([1, 0, 0, 0, 0]))
    lower, upper = d_star_marked(plain, flagged, 2)
    assert lower == 0.25 and upper == 0.5

    triangle = _rooted(3, [(0, 1), (1, 2), (0, 2)], 0)
    a = MarkedGraph(triangle, np.array([[0.0], [0.0], [1.0]]))
    b = MarkedGraph(triangle, np.array([[0.0], [1.0], [0.0]]))
    assert d_star_marked(a, b, 1) == (0.0, 0.5)

    with pytest.raises(ValidationError):
        d_star_marked(plain, a, 1)


def test_tree_bottleneck_matches_enumeration():
    rng = np.random.default_rng(3)
    rho = DegreeDist.from_mapping({1: 0.3, 2: 0.4, 3: 0.3})
    checked = 0
    for seed in range(40):
        tree = sample_ugw(rho, 2, seed=seed)
        if tree.vertex_count > 10:
            continue
        marks_a = rng.normal(size=(tree.vertex_count, 2))
        perm = rng.permutation(tree.vertex_count)
        other = RootedGraph(tree.graph.relabel(perm), int(perm[tree.root]))
        marks_b = np.empty_like(marks_a)
        marks_b[perm] = marks_a + rng.normal(scale=0.1, size=marks_a.shape)
        exact = general_bottleneck_distance(tree, marks_a, other, marks_b)
        assert abs(tree_bottleneck_distance(tree, marks_a, other, marks_b) - exact) < 1e-12
        checked += 1
    assert checked >= 10


def test_tree_bottleneck_non_isomorphic_is_infinite():
    a = _rooted(3, [(0, 1), (1, 2)], 0)
    b = _rooted(3, [(0, 1), (0, 2)], 0)
    assert tree_bottleneck_distance(a, np.zeros(3), b, np.zeros(3)) == np.inf


def test_neighborhood_histogram_of_cycle():
    cycle = Graph.from_edges(10, [(i, (i + 1) % 10) for i in range(10)])
    hist = neighborhood_histogram(cycle, 2)
    assert hist.total == 10 and len(hist.counts) == 1
    assert histogram_tv(hist, hist) == 0.0


def test_histogram_tv_and_radius_check():
    a = BallHistogram({b"x": 3, b"y": 1}, 4, 1)
    b = BallHistogram({b"x": 1, b"z": 1}, 2, 1)
    assert abs(histogram_tv(a, b) - 0.5) < 1e-12
    with pytest.raises(ValidationError):
        histogram_tv(a, BallHistogram({b"x": 1}, 1, 2))


def test_histograms_ignore_thread_count():
    g = gen_erdos_renyi(400, 2.0 / 400, seed=6)
    assert neighborhood_histogram(g, 2, threads=1) == neighborhood_histogram(g, 2, threads=4)
    sampler = lambda s: sample_ugw(DegreeDist.poisson(2.0), 2, s)  # noqa: E731
    assert sample_ball_histogram(sampler, 2, 300, seed=1, threads=1) == sample_ball_histogram(sampler, 2, 300, seed=1, threads=3)


def test_histogram_from_balls():
    balls = [_rooted(2, [(0, 1)], 0), _rooted(2, [(0, 1)], 1), _rooted(1, [], 0)]
    hist = histogram_from_balls(balls, 1)
    assert sorted(hist.counts.values()) == [1, 2]


def test_random_regular_is_locally_tree_like():
    g = gen_random_regular(2000, 3, seed=4)
    deficiency = lw_deficiency(g, lambda s: sample_ugw(DegreeDist.point_mass(3), 1, s), 1, 50, seed=2)
    assert deficiency < 0.03


def test_marked_battery_gap():
    path = _rooted(3, [(0, 1), (1, 2)], 1)
    zeros = [MarkedGraph(path, np.zeros(3)) for _ in range(3)]
    ones = [MarkedGraph(path, np.ones(3)) for _ in range(3)]
    assert marked_battery_gap(zeros, zeros, 1) == 0.0
    assert marked_battery_gap(zeros, ones, 1) > 0.5
    with pytest.raises(ValidationError):
        marked_battery_gap([], ones, 1)
