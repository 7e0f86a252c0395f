from __future__ import annotations

import numpy as np
import pytest

from business.graphs import (
    Graph,
    GraphError,
    SizeCapError,
    ball,
    ball_around,
    component_labels,
    component_of,
    components,
    disjoint_union,
    expected_giant_fraction,
    gen_canopy_truncation,
    gen_configuration_model,
    gen_erdos_renyi,
    gen_gnm,
    gen_lattice_box,
    gen_random_regular,
    gen_regular_tree,
    graph_distances,
    largest_component,
    regular_tree_size,
    tree_height,
    uniform_root_component,
    validate_degree_tail,
)


def _path(n):
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def test_from_edges_is_order_independent():
    a = Graph.from_edges(4, [(0, 1), (2, 1), (3, 0)])
    b = Graph.from_edges(4, [(0, 3), (1, 2), (1, 0)])
    assert a.same_as(b)
    assert a.adjacency == [[1, 3], [0, 2], [1], [0]]
    assert a.edges().tolist() == [[0, 1], [0, 3], [1, 2]]


@pytest.mark.parametrize("edges", [[(0, 0)], [(0, 1), (1, 0)], [(0, 5)]])
def test_from_edges_rejects_non_simple(edges):
    with pytest.raises(GraphError):
        Graph.from_edges(3, edges)


def test_padded_adjacency_matches_neighbors():
    g = Graph.from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2)])
    table, mask = g.padded_adjacency
    assert table.shape == (4, 3)
    for v in range(4):
        assert table[v][mask[v]].tolist() == g.neighbors(v).tolist()


def test_erdos_renyi_extremes_and_determinism():
    empty = gen_erdos_renyi(100, 0.0, seed=1)
    assert empty.vertex_count == 100 and empty.edge_count == 0
    full = gen_erdos_renyi(6, 1.0, seed=1)
    assert full.edge_count == 15
    assert gen_erdos_renyi(500, 0.01, seed=9).same_as(gen_erdos_renyi(500, 0.01, seed=9))
    assert not gen_erdos_renyi(500, 0.01, seed=9).same_as(gen_erdos_renyi(500, 0.01, seed=10))


def test_erdos_renyi_mean_degree():
    g = gen_erdos_renyi(20000, 2.0 / 20000, seed=3)
    # edge count ~ Binomial(~2e8, 1e-4): mean 19999, sd ~ 141
    assert abs(g.edge_count - 19999) < 800


def test_gnm_edge_count_exact():
    g = gen_gnm(50, 100, seed=4)
    assert g.edge_count == 100
    with pytest.raises(GraphError):
        gen_gnm(4, 7, seed=4)


def test_configuration_model_degrees():
    degrees = [3, 3, 2, 2, 2, 1, 1, 2, 2, 2]
    g = gen_configuration_model(degrees, seed=11)
    if not g.erased:
        assert g.degrees().tolist() == degrees
    else:
        assert np.all(g.degrees() <= np.asarray(degrees))


def test_configuration_model_rejects_odd_sum():
    with pytest.raises(GraphError):
        gen_configuration_model([1, 1, 1], seed=0)


def test_configuration_model_falls_back_to_erasure():
    # degree 3 on 4 vertices is K4 only; with zero attempts the erased model is used
    g = gen_configuration_model([3, 3, 3, 3], seed=5, max_attempts=0)
    assert g.erased or g.edge_count == 6


def test_random_regular():
    g = gen_random_regular(100, 3, seed=2)
    if not g.erased:
        assert set(g.degrees().tolist()) == {3}
    with pytest.raises(GraphError):
        gen_random_regular(5, 3, seed=2)


def test_size_cap():
    with pytest.raises(SizeCapError):
        gen_erdos_renyi(1000, 0.0, seed=0, max_vertices=999)


def test_lattice_box_geometry():
    box = gen_lattice_box(2, 2)
    assert box.vertex_count == 25
    assert box.coordinates(box.root) == (0, 0)
    assert box.graph.degree(box.root) == 4
    assert box.graph.edge_count == 2 * 5 * 4
    corner = box.index_of((-2, -2))
    assert box.graph.degree(corner) == 2


def test_regular_tree_size_and_degrees():
    tree = gen_regular_tree(3, 4)
    assert tree.vertex_count == regular_tree_size(3, 4) == 1 + 3 * (2**4 - 1)
    deg = tree.graph.degrees()
    assert deg[tree.root] == 3
    assert sorted(set(deg.tolist())) == [1, 3]
    assert tree_height(tree) == 4


def test_canopy_truncation_levels():
    canopy = gen_canopy_truncation(3, 3)
    assert canopy.level_widths() == [8, 4, 2, 1]
    assert canopy.vertex_count == 15
    assert canopy.position(canopy.root) == (0, 0)
    # a level-0 vertex is a leaf; level-1 vertices have d - 1 children plus a parent
    assert canopy.graph.degree(canopy.root) == 1
    level_one = canopy.graph.neighbors(canopy.root)[0]
    assert canopy.graph.degree(int(level_one)) == 3


def test_canopy_forest_keeps_root_component():
    canopy = gen_canopy_truncation(3, 2, base_width=2, root_level=1)
    assert canopy.vertex_count == 7
    assert canopy.position(canopy.root) == (1, 0)


def test_graph_distances_multi_source_and_unreachable():
    g = Graph.from_edges(6, [(0, 1), (1, 2), (2, 3), (4, 5)])
    assert graph_distances(g, [0]).tolist() == [0, 1, 2, 3, -1, -1]
    assert graph_distances(g, [0, 3]).tolist() == [0, 1, 1, 0, -1, -1]
    assert graph_distances(g, [0], limit=1).tolist() == [0, 1, -1, -1, -1, -1]


def test_components_and_largest():
    g = Graph.from_edges(7, [(0, 1), (2, 3), (3, 4), (5, 6)])
    comps = components(g)
    assert [c.vertex_count for c in comps] == [2, 3, 2]
    big = largest_component(g)
    assert big.vertex_count == 3 and big.original(big.root) == 2
    labels = component_labels(g)
    assert labels[2] == labels[4] != labels[0]
    comp = component_of(g, 6)
    assert comp.original(comp.root) == 6 and comp.vertex_count == 2


def test_largest_component_tie_goes_to_smallest_vertex():
    g = Graph.from_edges(4, [(2, 3), (0, 1)])
    big = largest_component(g)
    assert big.original(big.root) == 0


def test_ball_keeps_back_map():
    g = _path(10)
    b = ball_around(g, 5, 2)
    assert b.vertex_count == 5
    assert [b.original(v) for v in range(5)] == [3, 4, 5, 6, 7]
    inner = ball(b, 1)
    assert sorted(inner.original(v) for v in range(inner.vertex_count)) == [4, 5, 6]
    assert inner.original(inner.root) == 5


def test_disjoint_union_offsets():
    a, b = _path(3), Graph.from_edges(2, [(0, 1)])
    union, offsets = disjoint_union([a, b])
    assert offsets.tolist() == [0, 3, 5]
    assert union.edges().tolist() == [[0, 1], [1, 2], [3, 4]]


def test_relabel_preserves_structure():
    g = _path(4)
    h = g.relabel([3, 2, 1, 0])
    assert h.same_as(g)
    with pytest.raises(GraphError):
        g.relabel([0, 0, 1, 2])


def test_degree_tail_and_giant_fraction():
    assert validate_degree_tail([1] * 10000, 0.05)
    assert not validate_degree_tail([50] + [1] * 9999, 0.05)
    assert expected_giant_fraction(0.5) == 0.0
    assert abs(expected_giant_fraction(2.0) - 0.7968121300200202) < 1e-9


def test_uniform_root_component():
    g = Graph.from_edges(6, [(0, 1), (1, 2), (3, 4)])
    comp = uniform_root_component(g, seed=5)
    assert comp.vertex_count in (1, 2, 3)
    assert uniform_root_component(g, seed=5).original(comp.root) == comp.original(comp.root)
    # isolated vertex 5 is picked about one time in six
    hits = sum(uniform_root_component(g, seed=s).vertex_count == 1 for s in range(600))
    assert 60 <= hits <= 140
    with pytest.raises(GraphError):
        uniform_root_component(Graph.from_edges(0, []), seed=1)
