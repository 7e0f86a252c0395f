from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from business.dynamics import TrajectorySet
from business.local_topology import BallHistogram
from business.validators import ValidationError


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_curve(path: str | Path, rows: Iterable[Sequence]) -> Path:
    """Rows of (x, value, ci); ci may be None."""
    return write_rows(path, ("x", "value", "ci"), rows)


def write_histogram(path: str | Path, hist: BallHistogram) -> Path:
    rows = sorted((code.hex(), count) for code, count in hist.counts.items())
    return write_rows(path, ("code_hex", "count"), rows)


def write_trajectories(path: str | Path, ts: TrajectorySet) -> Path:
    width = 1 if ts.paths.ndim == 2 else ts.paths.shape[2]
    header = ("vertex", "time", *[f"state_{i}" for i in range(width)])

    def rows():
        for v in range(ts.vertex_count):
            for i, t in enumerate(ts.times.tolist()):
                state = ts.paths[v, i]
                yield (v, t, *np.atleast_1d(state).tolist())

    return write_rows(path, header, rows())


def read_curve(csv_path: str | Path) -> list[tuple[float, float, float | None]]:
    path = Path(csv_path)
    if not path.exists():
        raise FileNotFoundError(path)
    out = []
    with path.open("r", encoding="utf-8-sig", newline="") as f:
        for row in csv.DictReader(f):
            ci = (row.get("ci") or "").strip()
            out.append((float(row["x"]), float(row["value"]), float(ci) if ci else None))
    return out


def read_marks(csv_path: str | Path, vertex_count: int) -> np.ndarray:
    """Initial marks from a CSV with headers vertex, mark (integers) or vertex, state_0.. (reals)."""
    path = Path(csv_path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open("r", encoding="utf-8-sig", newline="") as f:
        reader = csv.DictReader(f)
        rows = list(reader)
        fields = reader.fieldnames or []
    if "vertex" not in fields:
        raise ValidationError(f"{path}: a 'vertex' column is required")
    seen = sorted(int(r["vertex"]) for r in rows)
    if seen != list(range(vertex_count)):
        raise ValidationError(f"{path}: expected one row per vertex 0..{vertex_count - 1}")
    by_vertex = {int(r["vertex"]): r for r in rows}
    if "mark" in fields:
        return np.asarray([int(by_vertex[v]["mark"]) for v in range(vertex_count)], dtype=np.int64)
    columns = sorted((c for c in fields if c.startswith("state_")), key=lambda c: int(c.split("_")[1]))
    if not columns:
        raise ValidationError(f"{path}: expected a 'mark' column or state_<i> columns")
    return np.asarray([[float(by_vertex[v][c]) for c in columns] for v in range(vertex_count)])
