"""Accuracy and calibration metrics for limit posteriors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

EIGEN_FLOOR = 1e-12


def _residual(post, truth):
    truth = np.asarray(truth, dtype=float).ravel()
    if truth.shape != post.mean.shape:
        raise ValueError(f"truth has {truth.size} entries, posterior has {post.mean.size}")
    return post.mean - truth


def error_W(post, truth):
    """Euclidean norm of posterior mean minus truth over the query set."""
    return float(np.linalg.norm(_residual(post, truth)))


class Surprise(NamedTuple):
    S: float
    degraded: bool  # some covariance eigenvalues sat below the floor


def surprise(post, truth, diagonal=False, floor=EIGEN_FLOOR):
    """Norm of the whitened residual C^{-1/2} (mean - truth).

    C^{-1/2} is the symmetric inverse square root from an eigendecomposition;
    eigenvalues below ``floor * max eigenvalue`` are raised to that level and
    the result is flagged as degraded.
    """
    r = _residual(post, truth)
    C = np.asarray(post.covariance, dtype=float)
    if diagonal:
        C = np.diag(np.diag(C))
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    top = max(float(w.max()), 0.0) if w.size else 0.0
    cutoff = floor * top if top > 0 else np.finfo(float).tiny
    degraded = bool(np.any(w < cutoff))
    w = np.maximum(w, cutoff)
    z = (V.T @ r) / np.sqrt(w)
    return Surprise(float(np.linalg.norm(z)), degraded)


def surprise_S(post, truth, diagonal=False):
    return surprise(post, truth, diagonal=diagonal).S


def chi2_cdf(x, dof):
    """Regularized lower incomplete gamma P(dof/2, x/2)."""
    return float(special.gammainc(0.5 * dof, 0.5 * max(x, 0.0)))


def chi2_quantile(prob, dof, tol=1e-13):
    """Inverse of :func:`chi2_cdf` by bracketing and bisection."""
    if not 0 < prob < 1:
        raise ValueError("probability must lie in (0, 1)")
    lo, hi = 0.0, max(1.0, float(dof))
    while chi2_cdf(hi, dof) < prob:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, dof) < prob:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def chi2_band(dof, central_mass=0.95):
    """Central ``central_mass`` interval of the chi-squared(dof) distribution."""
    if dof < 1:
        raise ValueError("dof must be at least 1")
    if not 0 < central_mass < 1:
        raise ValueError("central_mass must lie in (0, 1)")
    tail = 0.5 * (1.0 - central_mass)
    return chi2_quantile(tail, dof), chi2_quantile(1.0 - tail, dof)


@dataclass(frozen=True)
class CalibrationReport:
    W: float
    S: float
    dof: int
    band_lower: float
    band_upper: float
    inside_band: bool
    degraded: bool = False

    @property
    def S2(self):
        return self.S**2


def calibration_report(post, truth, central_mass=0.95, diagonal=False):
    W = error_W(post, truth)
    s = surprise(post, truth, diagonal=diagonal)
    dof = len(post.mean)
    lo, hi = chi2_band(dof, central_mass)
    return CalibrationReport(W, s.S, dof, lo, hi, bool(lo <= s.S**2 <= hi), s.degraded)


def convergence_slope(errors):
    """Least-squares slope of log(error) against log(h) from (h, error) pairs."""
    errors = list(errors)
    if len(errors) < 2:
        raise ValueError("need at least two (h, error) pairs")
    h = np.array([e[0] for e in errors], dtype=float)
    err = np.array([e[1] for e in errors], dtype=float)
    if np.any(err <= 0) or np.any(h <= 0):
        raise ValueError("errors and resolutions must be strictly positive")
    slope, _ = np.polyfit(np.log(h), np.log(err), 1)
    return float(slope)
