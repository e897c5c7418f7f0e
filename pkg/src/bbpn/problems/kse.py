"""Kuramoto-Sivashinsky equation in Fourier space, advanced with ETDRK4.

    u_t + u_xxxx + u_xx + u u_x = 0,   x periodic with period 2 pi L.

With u = sum_k v_k exp(i k x / L) each mode obeys

    dv_k/dt = c_k v_k - (i k / 2L) FFT(u^2)_k,    c_k = k^2/L^2 - k^4/L^4.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..exceptions import DivergenceError

CONTOUR_POINTS = 32


@dataclass(frozen=True)
class KSEConfig:
    """Grid, time step and initial condition u(x, 0) = amplitude * exp(-width x^2).

    The domain is [-pi L, pi L) sampled at N points, so dx = 2 pi L / N.
    """

    N: int = 128
    L: float = 16.0
    dt: float = 0.25
    t_end: float = 10.0
    amplitude: float = 1.0
    width: float = 0.01
    nonlinear: bool = True
    dealias: bool = True

    def __post_init__(self):
        if self.N < 2 or self.N % 2:
            raise ValueError("N must be even and at least 2")
        if not (self.L > 0 and self.dt > 0 and self.t_end > 0):
            raise ValueError("L, dt and t_end must be positive")
        if abs(self.steps * self.dt - self.t_end) > 1e-9 * self.t_end:
            raise ValueError(f"dt={self.dt} does not divide t_end={self.t_end}")

    @property
    def dx(self):
        return 2.0 * np.pi * self.L / self.N

    @property
    def steps(self):
        return int(round(self.t_end / self.dt))

    @property
    def x(self):
        return -np.pi * self.L + self.dx * np.arange(self.N)

    @property
    def wavenumbers(self):
        return np.fft.fftfreq(self.N, d=1.0 / self.N)

    @property
    def linear_symbol(self):
        k = self.wavenumbers / self.L
        return k**2 - k**4

    def initial(self):
        return self.amplitude * np.exp(-self.width * self.x**2)


class ETDRK4Coefficients(NamedTuple):
    E: np.ndarray
    E2: np.ndarray
    Q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray


def etdrk4_coefficients(c, dt, M=CONTOUR_POINTS):
    """ETDRK4 weights for the diagonal linear operator c, by contour averaging.

    The phi-functions are averaged over M points on a unit circle around each
    c_k dt, which avoids cancellation when c_k dt is near zero.
    """
    c = np.asarray(c, dtype=float)
    r = np.exp(1j * np.pi * (np.arange(1, M + 1) - 0.5) / M)
    LR = dt * c[:, None] + r[None, :]
    eLR = np.exp(LR)
    Q = dt * np.real(np.mean((np.exp(LR / 2) - 1.0) / LR, axis=1))
    f1 = dt * np.real(np.mean((-4.0 - LR + eLR * (4.0 - 3.0 * LR + LR**2)) / LR**3, axis=1))
    f2 = dt * np.real(np.mean((2.0 + LR + eLR * (-2.0 + LR)) / LR**3, axis=1))
    f3 = dt * np.real(np.mean((-4.0 - 3.0 * LR - LR**2 + eLR * (4.0 - LR)) / LR**3, axis=1))
    return ETDRK4Coefficients(np.exp(dt * c), np.exp(dt * c / 2), Q, f1, f2, f3)


def etdrk4_step(v, coeffs, nonlinear):
    """One ETDRK4 step for dv/dt = c v + nonlinear(v)."""
    E, E2, Q, f1, f2, f3 = coeffs
    Nv = nonlinear(v)
    a = E2 * v + Q * Nv
    Na = nonlinear(a)
    b = E2 * v + Q * Na
    Nb = nonlinear(b)
    c = E2 * a + Q * (2.0 * Nb - Nv)
    Nc = nonlinear(c)
    return E * v + Nv * f1 + 2.0 * (Na + Nb) * f2 + Nc * f3


def _kse_nonlinear(config):
    k = config.wavenumbers.copy()
    k[config.N // 2] = 0.0  # Nyquist mode has no real derivative
    g = -0.5j * k / config.L
    if config.dealias:
        g = g * (np.abs(config.wavenumbers) < config.N / 3)  # 2/3 rule
    if not config.nonlinear:
        return lambda v: np.zeros_like(v)
    return lambda v: g * np.fft.fft(np.real(np.fft.ifft(v)) ** 2)


class KSESolution(NamedTuple):
    x: np.ndarray
    u: np.ndarray
    imag_residue: float  # max |Im ifft(v)| relative to max |u|


def kse_etdrk4(config):
    """Solve the KSE to ``config.t_end`` and return the real-space solution."""
    coeffs = etdrk4_coefficients(config.linear_symbol, config.dt)
    nonlinear = _kse_nonlinear(config)
    v = np.fft.fft(config.initial())
    for k in range(config.steps):
        v = etdrk4_step(v, coeffs, nonlinear)
        if not np.all(np.isfinite(v)):
            raise DivergenceError(f"mode amplitude blew up at step {k + 1}", step=k + 1)
    u = np.fft.ifft(v)
    scale = max(float(np.max(np.abs(u.real))), 1e-300)
    return KSESolution(config.x, u.real.copy(), float(np.max(np.abs(u.imag))) / scale)


@functools.lru_cache(maxsize=32)
def kse_cached(config):
    return kse_etdrk4(config)


def spectral_interpolate(u, L, x_query):
    """Evaluate the trigonometric interpolant of grid values u at x_query.

    The grid is the one of :class:`KSEConfig`: N points starting at -pi L.
    """
    u = np.asarray(u, dtype=float)
    N = len(u)
    v = np.fft.fft(u) / N
    k = np.fft.fftfreq(N, d=1.0 / N)
    x0 = -np.pi * L
    xq = np.asarray(x_query, dtype=float) - x0
    phase = np.exp(1j * np.outer(xq, k) / L)
    # split the Nyquist mode evenly so the interpolant stays real
    w = np.ones(N)
    w[N // 2] = 0.5
    vals = phase @ (v * w)
    vals += 0.5 * v[N // 2] * np.exp(-1j * xq * (N // 2) / L)
    return vals.real
