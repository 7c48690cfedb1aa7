"""Result files: CSV snapshots and records, JSON summary.

Everything goes through :class:`ResultWriter`, which writes to a temporary
file in the target directory and renames it into place, so a crash never
leaves a half-written result.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def snapshot_rows(t: float, u: np.ndarray):
    for idx in np.ndindex(*u.shape):
        yield (t, *idx, u[idx])


class ResultWriter:
    """Single sink for one experiment's output directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.written: list[Path] = []

    def _write(self, rel, text) -> Path:
        p = atomic_write_text(self.root / rel, text)
        self.written.append(p)
        return p

    def snapshot(self, name: str, t: float, u: np.ndarray) -> Path:
        header = ["t"] + [f"i{k}" for k in range(u.ndim)] + ["u"]
        return self._write(Path("snapshots") / f"{name}_{t:.6g}.csv", csv_text(header, snapshot_rows(t, u)))

    def records(self, records, name: str = "records.csv") -> Path:
        rows = [r.flat() for r in records]
        keys = []
        for r in rows:
            keys.extend(k for k in r if k not in keys)
        return self._write(name, csv_text(keys, ([r.get(k, "") for k in keys] for r in rows)))

    def table(self, name: str, header, rows) -> Path:
        return self._write(name, csv_text(header, rows))

    def summary(self, data: dict, name: str = "summary.json") -> Path:
        return self._write(name, json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")
