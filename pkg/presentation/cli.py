from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from sqlalchemy.exc import SQLAlchemyError

import config
from business.experiments import EXPERIMENTS, ExperimentConfig, ExperimentResult, run_experiment
from business.validators import ConfigError, NumericalError, ValidationError
from dal import repositories as repo
from dal.db import get_session
from database.db_init import create_database
from integrations.csv_io import read_marks, write_curve, write_histogram, write_trajectories
from integrations.edge_list import format_edge_list, write_edge_list
from integrations.json_io import load_config, read_gibbs_spec, write_json

logger = logging.getLogger(__name__)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ips-lab",
        description="Seeded experiments for interacting particle systems on sparse random graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="u64 master seed (overrides the config)")
        p.add_argument("--threads", type=int, help="worker threads; never changes output bytes")
        p.add_argument("--out-dir", type=Path, help="where summaries and curves are written")
        p.add_argument("--graph-out", type=Path, help="write the experiment graph as an edge list")
        p.add_argument("--trajectories-out", type=Path, help="write the trajectories as CSV")
        p.add_argument("--no-ledger", action="store_true", help="do not record this run")
        if name == "duality":
            p.add_argument("--theta", type=float, help="Poisson mean")
            p.add_argument("--rho", help="degree law, e.g. poisson:2 or 0:0.2,1:0.2,3:0.6")
        if name == "graph-gen":
            p.add_argument("--er", nargs=2, metavar=("N", "P"), help="Erdos-Renyi G(N, P)")
    history = sub.add_parser("history", help="recent runs from the ledger")
    history.add_argument("--experiment", choices=sorted(EXPERIMENTS))
    history.add_argument("--limit", type=int, default=20)
    history.add_argument("--digest", help="only runs whose config digest starts with this prefix")
    return parser


def _experiment_config(args: argparse.Namespace) -> tuple[ExperimentConfig, Path]:
    values: dict = {}
    source, locate = None, None
    if args.config is not None:
        doc = load_config(args.config)
        values, source, locate = dict(doc.data), doc.source, doc.line_of
    named = values.pop("experiment", args.command)
    if named != args.command:
        raise ConfigError(f"config is for {named!r}, not {args.command!r}",
                          line=locate("experiment") if locate else None, source=source)
    seed = args.seed if args.seed is not None else values.pop("seed", None)
    values.pop("seed", None)
    if seed is None:
        raise ConfigError("a seed is required (--seed or \"seed\" in the config)", source=source)
    threads = args.threads if args.threads is not None else values.pop("threads", config.DEFAULT_THREADS)
    values.pop("threads", None)
    out_dir = args.out_dir if args.out_dir is not None else Path(values.pop("out_dir", config.RESULTS_DIR))
    values.pop("out_dir", None)
    if getattr(args, "theta", None) is not None:
        values["theta"] = args.theta
    if getattr(args, "rho", None) is not None:
        values["rho"] = args.rho
    if getattr(args, "er", None) is not None:
        try:
            values["graph"] = {"kind": "er", "n": int(args.er[0]), "p": float(args.er[1])}
        except ValueError as e:
            raise ConfigError(f"--er expects N P, got {args.er}") from e
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer (got {seed!r})", line=locate("seed") if locate else None,
                          source=source)
    cfg = ExperimentConfig(args.command, seed, values, int(threads), source=source, locate=locate,
                           marks_loader=read_marks, gibbs_loader=read_gibbs_spec)
    return cfg, out_dir


def _write_outputs(args: argparse.Namespace, result: ExperimentResult, out_dir: Path) -> Path:
    summary_path = write_json(out_dir / f"{result.experiment}.json", result.summary)
    for name, rows in result.curves.items():
        write_curve(out_dir / f"{result.experiment}_{name}.csv", rows)
    for name, hist in result.histograms.items():
        write_histogram(out_dir / f"{result.experiment}_{name}_histogram.csv", hist)
    if result.experiment == "graph-gen" and args.graph_out is None and result.graph is not None:
        sys.stdout.write(format_edge_list(*result.graph))
    elif args.graph_out is not None:
        if result.graph is None:
            logger.warning("%s produces no graph; --graph-out ignored", result.experiment)
        else:
            write_edge_list(args.graph_out, *result.graph)
    if args.trajectories_out is not None:
        if result.trajectories is None:
            logger.warning("%s produces no trajectories; --trajectories-out ignored", result.experiment)
        else:
            write_trajectories(args.trajectories_out, result.trajectories)
    return summary_path


def _record(cfg: ExperimentConfig, passed: bool, exit_code: int, summary_path: Path | None, metrics: dict) -> None:
    try:
        create_database()
        with get_session() as session:
            repo.record_run(session, cfg.experiment, cfg.seed, cfg.digest(), passed, exit_code,
                            str(summary_path) if summary_path else None, metrics)
    except SQLAlchemyError as e:
        logger.warning("run ledger unavailable: %s", e)


def _run_experiment(args: argparse.Namespace) -> int:
    try:
        cfg, out_dir = _experiment_config(args)
    except ConfigError as e:
        print(e.located(), file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(cfg)
        summary_path = _write_outputs(args, result, out_dir)
    except ConfigError as e:
        print(e.located(), file=sys.stderr)
        return EXIT_CONFIG
    except (ValidationError, FileNotFoundError) as e:
        print(f"{cfg.source or '<args>'}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error("numerical abort in %s: %s", cfg.experiment, e)
        print(f"numerical abort: {e}", file=sys.stderr)
        if not args.no_ledger:
            _record(cfg, False, EXIT_NUMERICAL, None, {})
        return EXIT_NUMERICAL
    code = EXIT_PASS if result.passed else EXIT_FAIL
    print(f"{cfg.experiment}: {'PASS' if result.passed else 'FAIL'} -> {summary_path}")
    if not args.no_ledger:
        _record(cfg, result.passed, code, summary_path, result.metrics())
    return code


def _history(args: argparse.Namespace) -> int:
    create_database()
    with get_session() as session:
        if args.digest:
            runs = repo.runs_with_digest(session, args.digest)[-args.limit:]
            if args.experiment:
                runs = [r for r in runs if r.experiment == args.experiment]
        else:
            runs = repo.list_runs(session, experiment=args.experiment, limit=args.limit)
        if not runs:
            print("No runs recorded.")
            return EXIT_PASS
        for run in runs:
            status = "PASS" if run.passed else f"FAIL({run.exit_code})"
            print(f"#{run.run_id} {run.created_at:%Y-%m-%d %H:%M:%S} {run.experiment:<20} seed={run.seed} "
                  f"{status} {run.config_digest[:12]}")
        print("\nPass rate:")
        for row in repo.pass_rate_by_experiment(session):
            print(f"  {row.experiment:<20} {row.passed or 0}/{row.runs}")
    return EXIT_PASS


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "history":
        return _history(args)
    return _run_experiment(args)
