"""CSV reading/writing with full float round-trip precision."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import StemflowError


def _format(value) -> str:
    if isinstance(value, str):
        return value
    v = float(value)
    if v != v:
        return "nan"
    return format(v, ".17g")


def write_csv(path, columns: dict) -> None:
    """RFC-4180-style CSV: header row, CRLF, '.' decimals, 17 significant digits."""
    names = list(columns)
    arrays = [np.atleast_1d(np.asarray(columns[n])) for n in names]
    lengths = {a.shape[0] for a in arrays}
    if len(lengths) > 1:
        raise StemflowError(f"CSV columns have unequal lengths: {sorted(lengths)}")
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for k in range(lengths.pop() if lengths else 0):
                writer.writerow([_format(a[k]) for a in arrays])
    except OSError as exc:
        raise StemflowError(f"cannot write CSV {path}: {exc}") from exc


def read_csv(path) -> dict:
    """Inverse of write_csv; numeric columns come back as float arrays."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise StemflowError(f"cannot read CSV {path}: {exc}") from exc
    if not rows:
        raise StemflowError(f"CSV {path} is empty (missing header)")
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        values = [row[j] for row in body]
        try:
            out[name] = np.array([float(v) for v in values])
        except ValueError:
            out[name] = np.array(values, dtype=object)
    return out
