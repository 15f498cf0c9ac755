"""Plain-text formats for graphs, labels and matrices.

Edge lists: first line holds the node count, then one ``i j`` pair per
undirected edge with 0-based indices and i < j.  Labels: one integer per
line.  Matrices: comma-separated rows at full (round-trip) precision.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .sbm import AdjacencyMatrix, Labels


def _atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_edge_list(adj: AdjacencyMatrix, path: str | Path) -> None:
    """Write a binary graph as an edge list."""
    iu, ju = np.nonzero(np.triu(adj.entries, 1))
    lines = [str(adj.n)]
    lines.extend(f"{i} {j}" for i, j in zip(iu.tolist(), ju.tolist()))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_edge_list(path: str | Path) -> AdjacencyMatrix:
    """Read an edge list written by :func:`write_edge_list`."""
    with open(path) as fh:
        raw = [line.strip() for line in fh if line.strip()]
    if not raw:
        raise ValueError(f"{path}: empty edge-list file")
    n = int(raw[0])
    if n < 1:
        raise ValueError(f"{path}: node count must be positive")
    a = np.zeros((n, n))
    for line in raw[1:]:
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: malformed edge line {line!r}")
        i, j = int(parts[0]), int(parts[1])
        if not (0 <= i < j < n):
            raise ValueError(f"{path}: edge ({i}, {j}) out of range for n={n}")
        a[i, j] = a[j, i] = 1.0
    return AdjacencyMatrix(a)


def write_labels(labels: Labels, path: str | Path) -> None:
    """Write one integer label per line."""
    _atomic_write_text(path, "\n".join(str(int(v)) for v in labels.values) + "\n")


def read_labels(path: str | Path, k: int | None = None) -> Labels:
    """Read labels; the range defaults to one past the largest value."""
    with open(path) as fh:
        values = [int(line.strip()) for line in fh if line.strip()]
    if not values:
        raise ValueError(f"{path}: empty labels file")
    if k is None:
        k = max(values) + 1
    return Labels(np.array(values, dtype=np.int64), k)


def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    """Write a matrix as comma-separated rows at round-trip precision."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    rows = (",".join(repr(float(x)) for x in row) for row in matrix)
    _atomic_write_text(path, "\n".join(rows) + "\n")


def read_matrix_csv(path: str | Path) -> np.ndarray:
    """Read a matrix written by :func:`write_matrix_csv`."""
    with open(path) as fh:
        rows = [
            [float(x) for x in line.strip().split(",")]
            for line in fh
            if line.strip()
        ]
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    return np.array(rows, dtype=np.float64)
