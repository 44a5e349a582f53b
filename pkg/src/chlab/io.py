"""CSV and JSON helpers shared by the experiments and the command line.

CSV files are comma separated with a header row and 17 significant digits
so that values round-trip exactly and reruns are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

__all__ = ["format_value", "write_csv", "write_columns", "read_csv", "write_json", "sha256", "to_jsonable"]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def write_csv(path, header, rows) -> Path:
    """Write ``rows`` (iterables of numbers or strings) under ``header``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def write_columns(path, columns: dict) -> Path:
    """Write equal-length 1-D arrays as named columns; complex arrays split into ``re_``/``im_``."""
    header, cols = [], []
    for name, col in columns.items():
        col = np.asarray(col)
        if np.iscomplexobj(col):
            header += [f"re_{name}", f"im_{name}"]
            cols += [col.real, col.imag]
        else:
            header.append(name)
            cols.append(col)
    sizes = {c.size for c in cols}
    if len(sizes) != 1:
        raise ValueError("columns must have equal length")
    return write_csv(path, header, zip(*cols))


def read_csv(path) -> tuple[list, np.ndarray]:
    """Header and float data of a CSV written by :func:`write_csv`."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def to_jsonable(obj):
    """Recursively convert numpy scalars and arrays to plain Python values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
