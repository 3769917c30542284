"""Plot-ready CSV and JSON writers with deterministic formatting."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def emit_plotdata(series, path, abscissa: str = "t", ordinate: str = "value", note: str = "") -> Path:
    """Two-column CSV sorted by abscissa under a single ``#`` header line naming the columns.

    ``series`` is an object with ``grid``/``values`` or a pair of sequences.
    """
    if hasattr(series, "grid"):
        xs, ys = series.grid, series.values
    else:
        xs, ys = series
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if xs.size == 0 or xs.shape != ys.shape:
        raise ValueError("series must be nonempty with matching columns")
    order = np.argsort(xs, kind="stable")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(f"# {abscissa},{ordinate}" + (f"  ({note})" if note else "") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for i in order:
            w.writerow([_fmt(xs[i]), _fmt(ys[i])])
    return path


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _jsonable(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path, payload) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, default=_jsonable, allow_nan=True)
        fh.write("\n")
    return path
