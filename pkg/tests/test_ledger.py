from __future__ import annotations

import pytest
from sqlalchemy import func, select
from sqlalchemy.exc import IntegrityError
from sqlalchemy.orm import sessionmaker

from dal import repositories as repo
from dal.db import make_engine
from dal.models import RunMetric
from database.db_init import create_database


def _setup():
    engine = make_engine("sqlite+pysqlite:///:memory:")
    # tables plus the same triggers the CLI installs
    create_database(engine)
    Session = sessionmaker(bind=engine, future=True)
    return Session()


def test_inconsistent_exit_code_rejected():
    s = _setup()
    try:
        repo.record_run(s, "duality", 1, "ab" * 32, passed=True, exit_code=1)
        s.commit()
        assert False, "Expected trigger to block a passing run with a failing exit code"
    except Exception as e:
        s.rollback()
        assert "exit_code" in str(e)


def test_exit_code_range_checked():
    s = _setup()
    with pytest.raises(IntegrityError):
        repo.record_run(s, "duality", 1, "ab" * 32, passed=False, exit_code=7)
    s.rollback()


def test_record_run_with_metrics():
    s = _setup()
    run = repo.record_run(s, "lwc-test", 2**64 - 1, "cd" * 32, passed=True, exit_code=0,
                          summary_path="out/lwc-test.json", metrics={"tv_final": 0.01, "n_max": 10000})
    s.commit()
    assert run.seed == str(2**64 - 1)
    assert repo.metrics_for_run(s, run.run_id) == {"n_max": 10000.0, "tv_final": 0.01}


def test_deleting_a_run_drops_its_metrics():
    s = _setup()
    run = repo.record_run(s, "duality", 3, "ef" * 32, passed=True, exit_code=0, metrics={"survival": 0.79})
    s.commit()
    s.delete(run)
    s.commit()
    assert s.execute(select(func.count(RunMetric.metric_id))).scalar_one() == 0


def test_pass_rate_and_history():
    s = _setup()
    repo.record_run(s, "duality", 1, "aa" * 32, passed=True, exit_code=0)
    repo.record_run(s, "duality", 2, "bb" * 32, passed=False, exit_code=1)
    repo.record_run(s, "gibbs-check", 1, "aa" * 32, passed=False, exit_code=3)
    s.commit()

    rows = repo.pass_rate_by_experiment(s)
    assert [(r.experiment, r.runs, r.passed) for r in rows] == [("duality", 2, 1), ("gibbs-check", 1, 0)]

    latest = repo.list_runs(s, experiment="duality", limit=1)
    assert len(latest) == 1 and latest[0].seed == "2"
    assert [r.experiment for r in repo.runs_with_digest(s, "aa" * 32)] == ["duality", "gibbs-check"]
