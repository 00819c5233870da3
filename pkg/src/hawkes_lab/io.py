"""CSV tables: one header row, comma separated, floats with 17 significant digits."""
from __future__ import annotations

import csv
import io
import json
import numbers
from pathlib import Path

import numpy as np


def format_cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, numbers.Integral):
        return str(int(x))
    if isinstance(x, numbers.Real):
        return format(float(x), ".17g")
    return str(x)


def parse_cell(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def table_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_cell(x) for x in row])
    return buf.getvalue()


def write_table(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(table_text(header, rows), encoding="utf-8")
    return path


def write_columns(path, columns: dict) -> Path:
    """Write equal-length 1-D arrays as named columns."""
    header = list(columns)
    cols = [np.asarray(c) for c in columns.values()]
    n = {len(c) for c in cols}
    if len(n) > 1:
        raise ValueError("columns differ in length")
    rows = zip(*[c.tolist() for c in cols])
    return write_table(path, header, rows)


def write_matrix(path, matrix: np.ndarray, labels=None) -> Path:
    """Dense matrix, one row per first index; the header holds the column
    labels (default ``c0..cN``) after a leading ``row`` column."""
    matrix = np.asarray(matrix)
    labels = list(range(matrix.shape[1])) if labels is None else list(labels)
    header = ["row"] + [f"c{j}" if not isinstance(j, str) else j for j in labels]
    rows = ([i] + r for i, r in enumerate(matrix.tolist()))
    return write_table(path, header, rows)


def read_table(path):
    """Return ``(header, rows)`` with cells parsed back to int / float."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[parse_cell(c) for c in row] for row in reader]
    return header, rows


def reemit(path) -> str:
    header, rows = read_table(path)
    return table_text(header, rows)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n", encoding="utf-8")
    return path


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")
