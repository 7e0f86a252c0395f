from __future__ import annotations

import json

import numpy as np
import pytest

from business.experiments import ExperimentConfig, init_sampler
from business.graphs import Graph
from business.models import consensus_sde, voter
from business.validators import ConfigError
from integrations.json_io import parse_config, read_gibbs_spec


def _cfg(text, source="run.json", **loaders):
    doc = parse_config(text, source=source)
    values = dict(doc.data)
    seed = values.pop("seed")
    return ExperimentConfig("emp-test", seed, values, source=source, locate=doc.line_of, **loaders)


@pytest.mark.parametrize(
    "init, key, line",
    [
        ('{"kind": "gibbs",\n    "sweeps": "ten"}', "sweeps", 4),
        ('{"kind": "gibbs",\n    "beta": [0.2]}', "beta", 4),
        ('{"kind": "constant",\n    "value": "one"}', "value", 4),
    ],
)
def test_bad_init_values_are_config_errors(init, key, line):
    cfg = _cfg('{\n  "seed": 1,\n  "init": ' + init + "\n}\n")
    with pytest.raises(ConfigError) as info:
        init_sampler(cfg, voter())
    assert info.value.line == line
    assert key in str(info.value)


def test_bad_diffusion_scale_is_a_config_error():
    cfg = _cfg('{\n  "seed": 1,\n  "init": {"kind": "iid", "scale": "wide"}\n}\n')
    with pytest.raises(ConfigError) as info:
        init_sampler(cfg, consensus_sde(1.0))
    assert info.value.located().startswith("run.json:3:")


def test_gibbs_init_reads_a_spec_file(tmp_path):
    spec_path = tmp_path / "ferro.json"
    spec_path.write_text(json.dumps({"alphabet": [0, 1], "psi": [[3.0, 1.0], [1.0, 3.0]], "lambda": [0.5, 0.5]}))
    cfg = _cfg(json.dumps({"seed": 2, "init": {"kind": "gibbs", "spec_path": str(spec_path), "sweeps": 3}}),
               gibbs_loader=read_gibbs_spec)
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    sample = init_sampler(cfg, voter())(g, 11)
    assert sample.dtype == np.int64 and sample.shape == (4,)
    assert set(sample.tolist()) <= {0, 1}
    assert np.array_equal(sample, init_sampler(cfg, voter())(g, 11))


def test_gibbs_spec_file_errors_point_into_the_spec_file(tmp_path):
    spec_path = tmp_path / "bad.json"
    spec_path.write_text('{\n  "alphabet": [0, 1],\n  "psi": [[1, 2], [1, 1]],\n  "lambda": [0.5, 0.5]\n}\n')
    cfg = _cfg(json.dumps({"seed": 2, "init": {"kind": "gibbs", "spec_path": str(spec_path)}}),
               gibbs_loader=read_gibbs_spec)
    with pytest.raises(ConfigError) as info:
        init_sampler(cfg, voter())
    assert info.value.located().startswith(f"{spec_path}:3:")
