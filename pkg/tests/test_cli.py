from __future__ import annotations

import json
from pathlib import Path

import pytest

import config
from business.experiments import EXPERIMENTS
from dal import db
from integrations.json_io import load_config
from presentation.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, run


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def _summary(out_dir, experiment):
    return json.loads((out_dir / f"{experiment}.json").read_text(encoding="utf-8"))


@pytest.fixture
def ledger(tmp_path, monkeypatch):
    monkeypatch.setattr(config, "RESULTS_DB_URL", f"sqlite:///{(tmp_path / 'runs.db').as_posix()}")
    monkeypatch.setattr(db, "_engine", None)
    monkeypatch.setattr(db, "_SessionLocal", None)
    return tmp_path / "runs.db"


def test_duality_for_poisson_two(tmp_path):
    code = run(["duality", "--theta", "2", "--seed", "1", "--out-dir", str(tmp_path), "--no-ledger"])
    assert code == EXIT_PASS
    summary = _summary(tmp_path, "duality")
    assert abs(summary["survival"] - 0.7968) < 1e-4
    assert abs(summary["dual_theta"] - 0.4064) < 1e-4
    assert summary["passed"] is True and summary["seed"] == 1


def test_duality_for_a_general_law(tmp_path):
    code = run(["duality", "--rho", "0:0.2,1:0.2,3:0.6", "--seed", "1", "--out-dir", str(tmp_path), "--no-ledger"])
    assert code == EXIT_PASS
    assert _summary(tmp_path, "duality")["dual_theta"] < 1.0


def test_duality_rejects_subcritical_law(tmp_path, capsys):
    code = run(["duality", "--theta", "0.5", "--seed", "1", "--out-dir", str(tmp_path), "--no-ledger"])
    assert code == EXIT_CONFIG
    assert "supercritical" in capsys.readouterr().err
    assert not (tmp_path / "duality.json").exists()


def test_empty_erdos_renyi_graph(tmp_path, capsys):
    code = run(["graph-gen", "--er", "100", "0.0", "--seed", "3", "--out-dir", str(tmp_path), "--no-ledger"])
    assert code == EXIT_PASS
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "n 100 root none"
    assert lines[1].startswith("graph-gen: PASS")
    summary = _summary(tmp_path, "graph-gen")
    assert summary["edge_count"] == 0 and summary["component_count"] == 100


def test_graph_out_file(tmp_path):
    target = tmp_path / "g.txt"
    code = run(["graph-gen", "--er", "50", "0.1", "--seed", "3", "--out-dir", str(tmp_path), "--graph-out",
                str(target), "--no-ledger"])
    assert code == EXIT_PASS
    assert target.read_text().startswith("n 50 root none\n")


def test_reruns_are_byte_identical(tmp_path):
    cfg = _write(tmp_path / "lwc.json", json.dumps({
        "seed": 12,
        "graph": {"kind": "er", "theta": 2.0},
        "sizes": [200, 400],
        "radius": 1,
        "limit_samples": 3000,
    }))
    codes = []
    for name, threads in (("a", "1"), ("b", "3")):
        codes.append(run(["lwc-test", "--config", str(cfg), "--threads", threads, "--out-dir", str(tmp_path / name),
                          "--no-ledger"]))
    assert codes[0] == codes[1] and codes[0] in (EXIT_PASS, EXIT_FAIL)
    for suffix in ("lwc-test.json", "lwc-test_tv.csv"):
        assert (tmp_path / "a" / suffix).read_bytes() == (tmp_path / "b" / suffix).read_bytes()


def test_missing_seed_is_a_config_error(tmp_path, capsys):
    code = run(["integrator-check", "--out-dir", str(tmp_path), "--no-ledger"])
    assert code == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_bad_value_reports_its_line(tmp_path, capsys):
    cfg = _write(tmp_path / "bad.json", '{\n  "seed": 4,\n  "radius": "two"\n}\n')
    code = run(["lwc-test", "--config", str(cfg), "--out-dir", str(tmp_path), "--no-ledger"])
    assert code == EXIT_CONFIG
    assert f"{cfg}:3:" in capsys.readouterr().err


def test_config_for_another_experiment(tmp_path, capsys):
    cfg = _write(tmp_path / "other.json", '{\n  "experiment": "duality",\n  "seed": 4\n}\n')
    assert run(["gibbs-check", "--config", str(cfg), "--no-ledger"]) == EXIT_CONFIG
    assert ":2:" in capsys.readouterr().err


def test_integrator_check_passes(tmp_path):
    traj = tmp_path / "traj.csv"
    code = run(["integrator-check", "--seed", "0", "--out-dir", str(tmp_path), "--trajectories-out", str(traj),
                "--no-ledger"])
    assert code == EXIT_PASS
    summary = _summary(tmp_path, "integrator-check")
    errors = summary["max_errors"]
    assert errors[0] > errors[1] > errors[2]
    assert (tmp_path / "integrator-check_error.csv").exists()
    assert traj.read_text().startswith("vertex,time,state_0\n")


def test_gibbs_check_on_a_small_grid(tmp_path):
    cfg = _write(tmp_path / "gibbs.json", json.dumps({
        "seed": 5,
        "beta": 0.4,
        "chains": 20000,
        "sweeps": 5,
        "burn_in": 30,
        "tolerances": {"marginal": 0.02, "correlation": 0.03},
    }))
    assert run(["gibbs-check", "--config", str(cfg), "--out-dir", str(tmp_path), "--no-ledger"]) == EXIT_PASS
    summary = _summary(tmp_path, "gibbs-check")
    assert summary["states"] == 512
    assert summary["identity_gap"] < 1e-12


def test_runs_are_recorded(tmp_path, ledger, capsys):
    assert run(["duality", "--theta", "2", "--seed", "1", "--out-dir", str(tmp_path)]) == EXIT_PASS
    assert run(["duality", "--theta", "3", "--seed", "2", "--out-dir", str(tmp_path)]) == EXIT_PASS
    assert ledger.exists()
    capsys.readouterr()
    assert run(["history", "--experiment", "duality"]) == EXIT_PASS
    out = capsys.readouterr().out
    assert sum(1 for line in out.splitlines() if line.startswith("#")) == 2
    assert "2/2" in out


def test_shipped_configs_name_known_experiments():
    shipped = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.json"))
    assert shipped
    for path in shipped:
        doc = load_config(path)
        assert doc.data["experiment"] in EXPERIMENTS
        assert isinstance(doc.data["seed"], int)


def test_bad_init_value_reports_its_line(tmp_path, capsys):
    cfg = _write(tmp_path / "init.json", '{\n  "seed": 4,\n  "init": {\n    "kind": "gibbs",\n    "sweeps": "ten"\n  }\n}\n')
    code = run(["emp-test", "--config", str(cfg), "--out-dir", str(tmp_path), "--no-ledger"])
    assert code == EXIT_CONFIG
    assert f"{cfg}:5:" in capsys.readouterr().err


def test_comp_emp_test_checks_the_giant(tmp_path):
    cfg = _write(tmp_path / "comp.json", json.dumps({
        "seed": 3,
        "root_draws": 100,
        "n_sub": 300,
        "n_super": 400,
        "replicas": 2000,
        "n_giant": 3000,
        "giant_replicas": 4,
    }))
    code = run(["comp-emp-test", "--config", str(cfg), "--out-dir", str(tmp_path), "--no-ledger"])
    assert code in (EXIT_PASS, EXIT_FAIL)
    summary = _summary(tmp_path, "comp-emp-test")
    assert abs(summary["survival"] - 0.7968) < 1e-4
    # sd of the 4-graph mean is about 0.006 at n = 3000
    assert abs(summary["giant_mean"] - summary["survival"]) < 0.03
    assert summary["giant_gap"] == abs(summary["giant_mean"] - summary["survival"])
    assert 0.0 < summary["giant_stderr"] < 0.02


def test_history_by_digest(tmp_path, ledger, capsys):
    assert run(["duality", "--theta", "2", "--seed", "1", "--out-dir", str(tmp_path)]) == EXIT_PASS
    assert run(["duality", "--theta", "2", "--seed", "1", "--out-dir", str(tmp_path)]) == EXIT_PASS
    assert run(["duality", "--theta", "3", "--seed", "1", "--out-dir", str(tmp_path)]) == EXIT_PASS
    capsys.readouterr()
    assert run(["history"]) == EXIT_PASS
    lines = [line for line in capsys.readouterr().out.splitlines() if line.startswith("#")]
    digests = [line.split()[-1] for line in lines]
    assert len(set(digests)) == 2
    repeated = next(d for d in digests if digests.count(d) == 2)
    assert run(["history", "--digest", repeated]) == EXIT_PASS
    picked = [line for line in capsys.readouterr().out.splitlines() if line.startswith("#")]
    assert len(picked) == 2 and all(line.endswith(repeated) for line in picked)
