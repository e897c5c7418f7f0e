"""Deterministic extrapolation to h = 0 in the variable x = h**alpha.

* :func:`richardson_pair` - intercept of the line through two points.
* :func:`neville_extrapolate` - polynomial interpolant through n points.
* :func:`bulirsch_stoer_extrapolate` - diagonal rational interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import RationalBreakdownError

BREAKDOWN_TOL = 1e-14


@dataclass(frozen=True)
class ScalarSequence:
    """Values q(h_i) at distinct resolutions, stored with h decreasing."""

    h: tuple
    values: tuple
    alpha: float = 1.0

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        if h.shape != v.shape:
            raise ValueError("h and values must have the same length")
        if np.any(h <= 0):
            raise ValueError("resolutions must be strictly positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        order = np.argsort(-h, kind="stable")
        h, v = h[order], v[order]
        if np.any(np.diff(h) == 0):
            raise ValueError("duplicate resolution in sequence")
        object.__setattr__(self, "h", tuple(h.tolist()))
        object.__setattr__(self, "values", tuple(v.tolist()))

    @classmethod
    def from_points(cls, points, alpha=1.0):
        points = list(points)
        return cls(tuple(p[0] for p in points), tuple(p[1] for p in points), alpha)

    @property
    def x(self):
        return np.asarray(self.h) ** self.alpha

    def __len__(self):
        return len(self.h)


def richardson_pair(q_h, q_gh, h, gamma, alpha):
    """Intercept at x = 0 of the line through (h^a, q(h)) and ((gamma h)^a, q(gamma h))."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if not h > 0 or not alpha > 0:
        raise ValueError("h and alpha must be positive")
    return q_h - (q_gh - q_h) / (gamma**alpha - 1.0)


def _require(seq):
    if len(seq) < 2:
        raise ValueError("extrapolation needs at least two points")


def neville_extrapolate(seq):
    """Value at x = 0 of the degree n-1 interpolating polynomial in x = h^alpha."""
    _require(seq)
    x = seq.x
    P = np.array(seq.values, dtype=float)
    n = len(x)
    for k in range(1, n):
        for i in range(n - k):
            j = i + k
            P[i] = (x[j] * P[i] - x[i] * P[i + 1]) / (x[j] - x[i])
    return float(P[0])


def bulirsch_stoer_extrapolate(seq, tol=BREAKDOWN_TOL):
    """Value at x = 0 of the diagonal rational interpolant in x = h^alpha.

    Uses the Stoer-Bulirsch recurrence with numerator degree >= denominator
    degree, so two points reproduce :func:`richardson_pair`. Raises
    :class:`RationalBreakdownError` when a recurrence denominator vanishes.
    """
    _require(seq)
    x = seq.x
    y = np.array(seq.values, dtype=float)
    n = len(x)
    scale = max(float(np.max(np.abs(y))), 1.0) * tol
    # tableau columns: prev2 = T[., k-2], prev = T[., k-1]
    prev2 = None
    prev = y.copy()
    for k in range(1, n):
        cur = np.empty(n - k)
        for r in range(n - k):
            i = r + k  # row index in the full tableau, finer point
            hi = prev[r + 1]  # T[i, k-1]
            lo = prev[r]  # T[i-1, k-1]
            diff = hi - lo
            if abs(diff) <= scale:
                cur[r] = hi
                continue
            if prev2 is None:
                ratio = 0.0
            else:
                den = hi - prev2[r + 1]  # T[i, k-1] - T[i-1, k-2]
                if abs(den) <= scale:
                    raise RationalBreakdownError(
                        f"vanishing difference in rational tableau at cell ({i}, {k})", cell=(i, k)
                    )
                ratio = diff / den
            denom = (x[i - k] / x[i]) * (1.0 - ratio) - 1.0
            if abs(denom) <= tol:
                raise RationalBreakdownError(
                    f"vanishing denominator in rational tableau at cell ({i}, {k})", cell=(i, k)
                )
            cur[r] = hi + diff / denom
        prev2, prev = prev, cur
    return float(prev[0])
