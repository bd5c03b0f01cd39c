"""Versioned CSV and JSON-sidecar output.

Every CSV starts with the schema comment line followed by a header row.
Floats are written with repr-exact precision so identical runs produce
byte-identical files.
"""
from __future__ import annotations

import csv
import json

import numpy as np

CSV_VERSION_LINE = "# bohmstab-csv v1"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, columns: dict):
    """Write named columns (aligned 1-d arrays) under the schema header."""
    names = list(columns)
    arrays = [np.atleast_1d(np.asarray(columns[k])) for k in names]
    n = arrays[0].shape[0]
    if any(a.shape != (n,) for a in arrays):
        raise ValueError("columns must be aligned 1-d arrays")
    with open(path, "w", newline="") as fh:
        fh.write(CSV_VERSION_LINE + "\n")
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(n):
            writer.writerow([_fmt(a[i]) for a in arrays])


def read_csv(path) -> dict:
    """Read a schema-versioned CSV back into named float arrays."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != CSV_VERSION_LINE:
            raise ValueError(
                f"{path} does not carry the '{CSV_VERSION_LINE}' header")
        reader = csv.reader(fh)
        names = next(reader, None)
        if not names:
            raise ValueError(f"{path} has no column header")
        rows = [row for row in reader if row]
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(names)))
    return {name: data[:, i] for i, name in enumerate(names)}


def write_sidecar(path, payload: dict):
    """Deterministic JSON provenance next to a CSV."""
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_coerce)
        fh.write("\n")


def _coerce(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")
