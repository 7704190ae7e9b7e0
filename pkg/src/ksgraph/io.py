"""Reading feature tables, distance matrices and label files."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import InputError

__all__ = ["encode_labels", "read_feature_csv", "read_distance_csv", "read_labels"]


def encode_labels(raw) -> tuple[np.ndarray, dict[str, int]]:
    """Map arbitrary label strings to ``0..K-1`` in order of first appearance."""
    mapping: dict[str, int] = {}
    codes = []
    for value in raw:
        key = str(value).strip()
        if key == "":
            raise InputError("empty group label")
        codes.append(mapping.setdefault(key, len(mapping)))
    return np.array(codes, dtype=np.int64), mapping


def _parse_float(text, where):
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"non-numeric value {text!r} at {where}") from None
    if not np.isfinite(value):
        raise InputError(f"non-finite value {text!r} at {where}")
    return value


def read_feature_csv(path, label_col: str):
    """Read a header-row CSV; ``label_col`` names the group column.

    Returns ``(points, labels, label_map, feature_names)``.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if label_col not in header:
        raise InputError(f"label column {label_col!r} not found in header {header}")
    li = header.index(label_col)
    features = [h for i, h in enumerate(header) if i != li]
    if not features:
        raise InputError("no feature columns besides the label column")
    body = rows[1:]
    if not body:
        raise InputError(f"{path} has a header but no observations")
    points = np.empty((len(body), len(features)))
    raw_labels = []
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise InputError(f"line {r}: expected {len(header)} fields, got {len(row)}")
        raw_labels.append(row[li])
        vals = [c for i, c in enumerate(row) if i != li]
        points[r - 2] = [_parse_float(c, f"line {r}, column {features[j]!r}")
                         for j, c in enumerate(vals)]
    labels, mapping = encode_labels(raw_labels)
    return points, labels, mapping, features


def read_labels(path):
    """One label per nonblank line; returns ``(labels, label_map)``."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    return encode_labels([ln for ln in lines if ln.strip()])


def read_distance_csv(path) -> np.ndarray:
    """Headerless ``N x N`` numeric CSV."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise InputError(f"{path} is empty")
    n = len(rows)
    out = np.empty((n, n))
    for i, row in enumerate(rows):
        if len(row) != n:
            raise InputError(f"distance matrix must be square: row {i + 1} has "
                             f"{len(row)} entries, expected {n}")
        out[i] = [_parse_float(c, f"row {i + 1}, column {j + 1}") for j, c in enumerate(row)]
    return out
