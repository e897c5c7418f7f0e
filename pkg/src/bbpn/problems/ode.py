"""Fixed-step explicit integrators and the Lotka-Volterra test problem."""

from __future__ import annotations

import functools
from typing import NamedTuple

import numpy as np

from ..exceptions import DivergenceError

LV_Y0 = (20.0, 20.0)
LV_T_END = 20.0


def lotka_volterra(t, y):
    y1, y2 = y[0], y[1]
    return np.array([0.5 * y1 - 0.05 * y1 * y2, -0.5 * y2 + 0.05 * y1 * y2])


def zero_field(t, y):
    return np.zeros_like(np.asarray(y, dtype=float))


class Trajectory(NamedTuple):
    t: np.ndarray
    y: np.ndarray  # (steps + 1, dim)

    @property
    def final(self):
        return self.y[-1]


def _steps(t_end, h):
    if not h > 0:
        raise ValueError("step size must be positive")
    if h > t_end * (1 + 1e-12):
        raise ValueError("step size exceeds the integration interval")
    n = int(round(t_end / h))
    if abs(n * h - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"step size {h} does not divide t_end={t_end}")
    return n


def _check(y, k):
    if not np.all(np.isfinite(y)):
        raise DivergenceError(f"non-finite state at step {k}", step=k)


def euler_solve(field, y0, t_end, h):
    """Explicit Euler: y_{k+1} = y_k + h f(t_k, y_k)."""
    n = _steps(t_end, h)
    y = np.empty((n + 1, len(y0)))
    y[0] = y0
    for k in range(n):
        y[k + 1] = y[k] + h * field(k * h, y[k])
        _check(y[k + 1], k + 1)
    return Trajectory(h * np.arange(n + 1), y)


def ab2_solve(field, y0, t_end, h):
    """Two-step Adams-Bashforth, started with one Euler step."""
    n = _steps(t_end, h)
    y = np.empty((n + 1, len(y0)))
    y[0] = y0
    f_prev = field(0.0, y[0])
    y[1] = y[0] + h * f_prev
    _check(y[1], 1)
    for k in range(1, n):
        f_k = field(k * h, y[k])
        y[k + 1] = y[k] + h * (1.5 * f_k - 0.5 * f_prev)
        _check(y[k + 1], k + 1)
        f_prev = f_k
    return Trajectory(h * np.arange(n + 1), y)


def rk4_reference(field, y0, t_end, h_ref=1e-3):
    """Final state of classical fourth-order Runge-Kutta with step h_ref."""
    n = _steps(t_end, h_ref)
    y = np.array(y0, dtype=float)
    h = h_ref
    for k in range(n):
        t = k * h
        k1 = field(t, y)
        k2 = field(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = field(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = field(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"non-finite state at step {k + 1}", step=k + 1)
    return y


@functools.lru_cache(maxsize=64)
def lotka_volterra_reference(y0=LV_Y0, t_end=LV_T_END, h_ref=1e-3):
    """Cached RK4 reference for the Lotka-Volterra final state."""
    return tuple(rk4_reference(lotka_volterra, y0, t_end, h_ref).tolist())


SOLVERS = {"euler": (euler_solve, 1.0), "ab2": (ab2_solve, 2.0)}
