"""CSV ingestion and the offline [-1, 1] scaling convention.

A data file is numeric rows with a constant column count; the last column is
the target and an optional non-numeric first row is treated as a header.
"""
import csv
from dataclasses import dataclass

import numpy as np


class DataError(Exception):
    """Malformed or unusable input data."""


def _parse_row(row, lineno):
    try:
        vals = [float(c) for c in row]
    except ValueError:
        raise DataError(f"line {lineno}: non-numeric value in row {row!r}") from None
    if not all(np.isfinite(vals)):
        raise DataError(f"line {lineno}: non-finite value in row {row!r}")
    return vals


def load_csv(path):
    """Parse a CSV into (X, y) in file order; header auto-detected."""
    rows = []
    width = None
    with open(path, newline="") as f:
        reader = csv.reader(f)
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1:
                try:
                    [float(c) for c in row]
                except ValueError:
                    continue  # header row
            vals = _parse_row(row, lineno)
            if width is None:
                width = len(vals)
                if width < 2:
                    raise DataError(f"line {lineno}: need at least one feature column and a target")
            elif len(vals) != width:
                raise DataError(f"line {lineno}: expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    a = np.asarray(rows, dtype=np.float64)
    return np.ascontiguousarray(a[:, :-1]), np.ascontiguousarray(a[:, -1])


@dataclass
class ScaleParams:
    """Per-column affine maps onto [-1, 1]; constant columns map to 0."""

    col_min: np.ndarray  # features then target
    col_max: np.ndarray

    def to_dict(self):
        return {"col_min": self.col_min.tolist(), "col_max": self.col_max.tolist()}


def minmax_scale(X, y):
    """Two-pass offline scaling of features and target onto [-1, 1]."""
    A = np.column_stack([X, y])
    lo = A.min(axis=0)
    hi = A.max(axis=0)
    span = hi - lo
    scaled = np.zeros_like(A)
    nz = span > 0
    scaled[:, nz] = 2.0 * (A[:, nz] - lo[nz]) / span[nz] - 1.0
    params = ScaleParams(lo, hi)
    return scaled[:, :-1].copy(), scaled[:, -1].copy(), params


def minmax_inverse(Xs, ys, params: ScaleParams):
    """Undo minmax_scale; constant columns recover their original value."""
    A = np.column_stack([Xs, ys])
    lo, hi = params.col_min, params.col_max
    span = hi - lo
    out = np.empty_like(A)
    nz = span > 0
    out[:, nz] = (A[:, nz] + 1.0) / 2.0 * span[nz] + lo[nz]
    out[:, ~nz] = lo[~nz]
    return out[:, :-1].copy(), out[:, -1].copy()
