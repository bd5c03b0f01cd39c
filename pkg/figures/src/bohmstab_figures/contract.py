"""The CSV contract this package consumes.

Files must start with the schema comment line, then a column header.  This
module deliberately re-implements the tiny reader instead of importing the
simulation package: figures depend only on the file format.
"""
from __future__ import annotations

import csv

import numpy as np

CSV_VERSION_LINE = "# bohmstab-csv v1"


class SchemaMismatchError(Exception):
    """File is not a bohmstab-csv v1 artifact."""


class MissingColumnError(Exception):
    """A required column is absent from the input CSV."""


def read_csv(path) -> dict:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise SchemaMismatchError(f"cannot open {path}: {exc}") from exc
    with fh:
        first = fh.readline().rstrip("\n")
        if first != CSV_VERSION_LINE:
            raise SchemaMismatchError(
                f"{path}: expected leading '{CSV_VERSION_LINE}' line")
        reader = csv.reader(fh)
        names = next(reader, None)
        if not names or names == [""]:
            raise SchemaMismatchError(f"{path}: no column header")
        rows = [row for row in reader if row]
    if not rows:
        raise SchemaMismatchError(f"{path}: no data rows")
    try:
        data = np.array(rows, dtype=float)
    except ValueError as exc:
        raise SchemaMismatchError(f"{path}: non-numeric data") from exc
    if data.shape[1] != len(names):
        raise SchemaMismatchError(f"{path}: ragged rows")
    return {name: data[:, i] for i, name in enumerate(names)}


def require(data: dict, columns, path="input") -> None:
    for col in columns:
        if col not in data:
            raise MissingColumnError(f"{path}: missing column {col!r}")


def columns_matching(data: dict, prefix: str) -> list:
    return sorted(name for name in data if name.startswith(prefix))
