from __future__ import annotations

import numpy as np
import pytest

from business.dynamics import TrajectorySet
from business.gibbs import ising_spec
from business.graphs import Graph, GraphError, gen_erdos_renyi
from business.local_topology import BallHistogram
from business.validators import ConfigError, ValidationError
from integrations.csv_io import read_curve, read_marks, write_curve, write_histogram, write_trajectories
from integrations.edge_list import format_edge_list, parse_edge_list, read_edge_list, write_edge_list
from integrations.json_io import dumps, load_config, parse_config, read_gibbs_spec, write_json


def test_edge_list_format_is_canonical():
    g = Graph.from_edges(4, [(3, 2), (1, 0)])
    assert format_edge_list(g, root=1) == "n 4 root 1\n0 1\n2 3\n"
    assert format_edge_list(Graph.from_edges(3, [])) == "n 3 root none\n"


def test_edge_list_file_roundtrip(tmp_path):
    g = gen_erdos_renyi(60, 0.05, seed=2)
    path = write_edge_list(tmp_path / "out" / "g.txt", g, root=5)
    back, root = read_edge_list(path)
    assert back.same_as(g) and root == 5


def test_edge_list_comments_and_blank_lines():
    g, root = parse_edge_list("# sample\nn 3 root none\n\n0 1\n# middle\n1 2\n")
    assert root is None
    assert g.edges().tolist() == [[0, 1], [1, 2]]


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "empty"),
        ("nodes 3\n0 1\n", "line 1"),
        ("n 3 root none\n0 1 2\n", "line 2"),
        ("n 3 root none\n0 x\n", "malformed"),
        ("n 3 root 7\n0 1\n", "root 7"),
    ],
)
def test_edge_list_errors(text, message):
    with pytest.raises(GraphError, match=message):
        parse_edge_list(text)


def test_edge_list_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_edge_list(tmp_path / "nope.txt")


def test_curve_roundtrip_keeps_missing_ci(tmp_path):
    path = write_curve(tmp_path / "c.csv", [(1, 0.25, 0.01), (2, np.float64(0.125), None)])
    assert path.read_text().splitlines()[0] == "x,value,ci"
    assert read_curve(path) == [(1.0, 0.25, 0.01), (2.0, 0.125, None)]


def test_histogram_rows_are_sorted(tmp_path):
    hist = BallHistogram({b"\x02": 3, b"\x01": 1}, 4, 1)
    lines = write_histogram(tmp_path / "h.csv", hist).read_text().splitlines()
    assert lines == ["code_hex,count", "01,1", "02,3"]


def test_trajectory_rows(tmp_path):
    g = Graph.from_edges(2, [(0, 1)])
    ts = TrajectorySet(g, np.array([0.0, 0.5]), np.array([[[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]]]), "vector")
    lines = write_trajectories(tmp_path / "t.csv", ts).read_text().splitlines()
    assert lines[0] == "vertex,time,state_0,state_1"
    assert lines[2] == "0,0.5,3.0,4.0"
    assert len(lines) == 5


def test_read_marks(tmp_path):
    ints = tmp_path / "m.csv"
    ints.write_text("vertex,mark\n1,0\n0,1\n2,1\n")
    assert read_marks(ints, 3).tolist() == [1, 0, 1]
    reals = tmp_path / "r.csv"
    reals.write_text("vertex,state_1,state_0\n0,2.0,1.0\n1,4.0,3.0\n")
    assert read_marks(reals, 2).tolist() == [[1.0, 2.0], [3.0, 4.0]]
    with pytest.raises(ValidationError):
        read_marks(ints, 4)
    bare = tmp_path / "b.csv"
    bare.write_text("vertex,colour\n0,red\n")
    with pytest.raises(ValidationError):
        read_marks(bare, 1)


def test_dumps_is_stable():
    data = {"b": np.float64(0.5), "a": [np.int64(3), np.bool_(True)], "c": {"z": np.arange(2)}}
    text = dumps(data)
    assert text == dumps(dict(reversed(list(data.items()))))
    assert text.startswith('{\n  "a": [\n    3,\n    true\n  ]')
    assert text.endswith("}\n")


def test_parse_config_reports_lines():
    doc = parse_config('{\n  "seed": 1,\n  "sizes": [1, 2]\n}', source="run.json")
    assert doc.data["sizes"] == [1, 2]
    assert doc.line_of("sizes") == 3
    assert doc.line_of("missing") is None
    with pytest.raises(ConfigError) as info:
        parse_config('{\n  "seed": 1,\n  "sizes": [1, 2\n}', source="run.json")
    assert info.value.located().startswith("run.json:4:")
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.json")


def test_gibbs_spec_files(tmp_path):
    path = tmp_path / "ising.json"
    write_json(path, ising_spec(0.25).to_dict())
    assert np.allclose(read_gibbs_spec(path).psi, ising_spec(0.25).psi)
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "alphabet": [0, 1],\n  "psi": [[1, 2], [1, 1]],\n  "lambda": [0.5, 0.5]\n}\n')
    with pytest.raises(ConfigError) as info:
        read_gibbs_spec(bad)
    assert info.value.line == 3
