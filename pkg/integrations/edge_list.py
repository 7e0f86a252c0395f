"""Plain-text edge lists.

    n <vertex count> root <index|none>
    u v
    ...

One edge per line with u < v, sorted, so equal graphs give equal files.
"""
from __future__ import annotations

from pathlib import Path

from business.graphs import Graph, GraphError


def format_edge_list(g: Graph, root: int | None = None) -> str:
    lines = [f"n {g.vertex_count} root {'none' if root is None else int(root)}"]
    lines.extend(f"{u} {v}" for u, v in g.edges().tolist())
    return "\n".join(lines) + "\n"


def write_edge_list(path: str | Path, g: Graph, root: int | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_edge_list(g, root), encoding="utf-8")
    return path


def parse_edge_list(text: str) -> tuple[Graph, int | None]:
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), start=1)
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise GraphError("empty edge list")
    first, header = lines[0]
    head = header.split()
    if len(head) != 4 or head[0] != "n" or head[2] != "root":
        raise GraphError(f"line {first}: expected 'n <count> root <index|none>', got {header!r}")
    try:
        n = int(head[1])
        root = None if head[3] == "none" else int(head[3])
        edges = []
        for i, ln in lines[1:]:
            parts = ln.split()
            if len(parts) != 2:
                raise GraphError(f"line {i}: expected 'u v', got {ln!r}")
            edges.append((int(parts[0]), int(parts[1])))
    except ValueError as e:
        raise GraphError(f"malformed edge list: {e}") from e
    g = Graph.from_edges(n, edges)
    if root is not None and not 0 <= root < n:
        raise GraphError(f"root {root} outside 0..{n - 1}")
    return g, root


def read_edge_list(path: str | Path) -> tuple[Graph, int | None]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return parse_edge_list(path.read_text(encoding="utf-8"))
