"""Atomic file output helpers."""
from __future__ import annotations

import contextlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np


@contextlib.contextmanager
def atomic_open(path):
    """Text handle on a sibling temp file renamed over ``path`` on success.

    On any exception the temp file is removed and ``path`` is left untouched.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        os.fchmod(fd, 0o644)
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to a sibling temp file, then rename over ``path``."""
    with atomic_open(path) as fh:
        fh.write(text)
    return Path(path)


def atomic_write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=False) + "\n")


def write_csv(path, header: list[str], rows) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    return repr(float(v))


class ColumnWriter:
    """Append numeric column blocks to a CSV, committed atomically on close.

    Use as a context manager; values are written with 17 significant digits
    so they round-trip exactly.
    """

    def __init__(self, path, header: list[str]):
        self.path = Path(path)
        self.header = list(header)
        self._ctx = None
        self._fh = None

    def __enter__(self) -> "ColumnWriter":
        self._ctx = atomic_open(self.path)
        self._fh = self._ctx.__enter__()
        self._fh.write(",".join(self.header) + "\n")
        return self

    def append(self, columns) -> None:
        table = np.column_stack([np.asarray(c, dtype=np.float64) for c in columns])
        if table.shape[1] != len(self.header):
            raise ValueError(f"expected {len(self.header)} columns, got {table.shape[1]}")
        np.savetxt(self._fh, table, fmt="%.17g", delimiter=",")

    def __exit__(self, *exc):
        return self._ctx.__exit__(*exc)


def write_columns(path, header: list[str], columns, block: int = 1 << 16) -> Path:
    """Numeric columns as CSV with 17 significant digits (exact round trip)."""
    columns = [np.asarray(c, dtype=np.float64) for c in columns]
    n = len(columns[0]) if columns else 0
    with ColumnWriter(path, header) as w:
        for a in range(0, n, block):
            w.append([c[a:a + block] for c in columns])
    return Path(path)
