"""Left Riemann sums and the oscillatory test integrand."""

from __future__ import annotations

import math

import numpy as np

EXACT_INTEGRAL = math.e - 1.0


def riemann_sum(f, a, b, h):
    """Left Riemann sum of ``f`` over [a, b] with cells of width h.

    When h does not divide b - a, the last cell is shortened to end at b.
    """
    if not h > 0:
        raise ValueError("bandwidth h must be positive")
    if not b > a:
        raise ValueError("need b > a")
    if h > b - a:
        raise ValueError("bandwidth h exceeds the interval length")
    n_full = int(math.floor((b - a) / h + 1e-9))
    left = a + h * np.arange(n_full)
    total = h * float(np.sum(f(left)))
    rest = (b - a) - n_full * h
    if rest > 1e-12 * (b - a):
        total += rest * float(f(np.array([a + n_full * h]))[0])
    return total


def oscillatory_integrand(x):
    """sin^2(4 pi x) + e^x - 5/2 x^4 + 1/2 cos(16 pi x) + 1/4 cos(20 pi x).

    Its integral over [0, 1] is e - 1.
    """
    x = np.asarray(x, dtype=float)
    return (
        np.sin(4 * np.pi * x) ** 2
        + np.exp(x)
        - 2.5 * x**4
        + 0.5 * np.cos(16 * np.pi * x)
        + 0.25 * np.cos(20 * np.pi * x)
    )
