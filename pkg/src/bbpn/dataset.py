"""Extrapolation datasets: triples (h, t, q(h, t)) in lexicographic order."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DataConsistencyError, EmptyDatasetError


def _ordinate(t):
    if t is None:
        return np.zeros(0)
    return np.atleast_1d(np.asarray(t, dtype=float)).ravel()


@dataclass(frozen=True, eq=False)
class Dataset:
    """Solver outputs sorted by decreasing h, then by ordinate.

    ``t`` is an (m, d) array of flattened ordinates; ``d`` may be 0 for a
    scalar quantity of interest.
    """

    h: np.ndarray
    t: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        for name in ("h", "t", "q"):
            getattr(self, name).setflags(write=False)

    @property
    def m(self):
        return len(self.q)

    @property
    def dim(self):
        return self.t.shape[1]

    @property
    def resolutions(self):
        """Distinct h values, decreasing."""
        return np.unique(self.h)[::-1]

    @property
    def n(self):
        return len(self.resolutions)

    @property
    def m_i(self):
        return [int(np.sum(self.h == r)) for r in self.resolutions]

    @property
    def h_finest(self):
        return float(self.h.min())

    def points(self):
        return [(float(h), tuple(t), float(q)) for h, t, q in zip(self.h, self.t, self.q)]

    def at_resolution(self, h):
        mask = self.h == h
        return self.t[mask], self.q[mask]

    def select(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return Dataset(self.h[mask].copy(), self.t[mask].copy(), self.q[mask].copy())

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.t.shape == other.t.shape
            and np.array_equal(self.h, other.h)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.q, other.q)
        )

    def __len__(self):
        return self.m

    def __repr__(self):
        return f"Dataset(n={self.n}, m={self.m}, dim={self.dim})"


def build(points):
    """Build a sorted, de-duplicated Dataset from (h, t, value) triples.

    Raises
    ------
    EmptyDatasetError
        If ``points`` is empty.
    ValueError
        If any h is not strictly positive or ordinates differ in dimension.
    DataConsistencyError
        If the same (h, t) appears with two different values.
    """
    points = list(points)
    if not points:
        raise EmptyDatasetError("cannot build a dataset from no points")
    rows = []
    dim = None
    for h, t, value in points:
        h = float(h)
        if not h > 0:
            raise ValueError(f"resolution h must be strictly positive, got {h}")
        t = _ordinate(t)
        if dim is None:
            dim = t.size
        elif t.size != dim:
            raise ValueError("all ordinates must have the same dimension")
        rows.append((-h, tuple(t.tolist()), float(value)))

    rows.sort(key=lambda r: (r[0], r[1]))
    kept = [rows[0]]
    for row in rows[1:]:
        prev = kept[-1]
        if row[0] == prev[0] and row[1] == prev[1]:
            if row[2] != prev[2] and not (np.isnan(row[2]) and np.isnan(prev[2])):
                raise DataConsistencyError(
                    f"conflicting values {prev[2]!r} and {row[2]!r} at h={-row[0]}, t={row[1]}"
                )
            continue
        kept.append(row)

    h = np.array([-r[0] for r in kept])
    t = np.array([r[1] for r in kept], dtype=float).reshape(len(kept), dim)
    q = np.array([r[2] for r in kept])
    return Dataset(h, t, q)


def augment_cumulative(runs):
    """Element i holds the union of runs 1..i (runs ordered coarse to fine)."""
    out = []
    pooled = []
    for run in runs:
        pooled.extend(run.points())
        out.append(build(pooled))
    return out


@dataclass(frozen=True)
class HParameterization:
    """Power-law map from a solver control w to the resolution h = scale * w**(-power).

    ``power=1`` gives h = 1/w for iteration counts; ``power=-1`` with w a
    step size gives h = w.
    """

    power: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.power == 0 or not self.scale > 0:
            raise ValueError("power must be non-zero and scale positive")

    def to_h(self, w):
        return self.scale * float(w) ** (-self.power)

    def to_w(self, h):
        return (float(h) / self.scale) ** (-1.0 / self.power)


def read_csv(path):
    """Read a dataset from CSV with header ``h, t_1..t_p, value``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise EmptyDatasetError(f"{path}: empty file") from None
        if not header or header[0] != "h" or header[-1] != "value":
            raise ValueError(f"{path}: header must be 'h, t_1..t_p, value', got {header}")
        points = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} columns")
            vals = [float(c) for c in row]
            points.append((vals[0], vals[1:-1], vals[-1]))
    return build(points)


def write_csv(data, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["h", *[f"t_{i + 1}" for i in range(data.dim)], "value"])
        for h, t, q in zip(data.h, data.t, data.q):
            writer.writerow([repr(float(h)), *[repr(float(x)) for x in t], repr(float(q))])
    return path
