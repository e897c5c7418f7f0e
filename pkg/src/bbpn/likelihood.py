"""Marginal likelihood, closed-form amplitude and maximum-likelihood fitting.

The amplitude sigma^2 is profiled out: for fixed remaining parameters the
maximizer is ``q' Kbar^{-1} q / m``, and the plug-in (profile) likelihood is

    -(m/2) log(q' Kbar^{-1} q) - (1/2) log|Kbar|   (+ constant).

Fitting maximizes the profile likelihood over log-parameters with L-BFGS-B
and analytic gradients, from several random starts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize

from .exceptions import BBPNError, DegenerateDataError, EmptyDatasetError
from .kernel import Hyperparameters, assemble_gram, gram_gradients
from .posterior import cho_solve, factorize

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)

DEFAULT_BOUNDS = (1e-4, 1e4)
DEFAULT_ALPHA_BOUNDS = (0.1, 6.0)


def _unit(params):
    return replace(params, sigma2=1.0)


def _check(data):
    if data is None or data.m == 0:
        raise EmptyDatasetError("likelihood needs at least one observation")


class _Terms:
    """Cached linear algebra for one parameter point."""

    def __init__(self, data, params, prior):
        _check(data)
        self.data, self.params, self.prior = data, _unit(params), prior
        self.K = assemble_gram(data, self.params, prior)
        self.factor = factorize(self.K)
        self.a = cho_solve(self.factor, data.q)
        self.quad = float(data.q @ self.a)
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.factor.L))))

    def gradient(self):
        m = self.data.m
        if self.quad <= 0:
            raise DegenerateDataError("q' K^-1 q vanishes; observations are identically zero")
        Kinv = cho_solve(self.factor, np.eye(m))
        # the nugget is a fixed multiple of trace(K)/m, so it has a derivative too
        nug_ratio = self.factor.nugget / (np.trace(self.K) / m)
        out = []
        for D in gram_gradients(self.data, self.params, self.prior):
            D = D + nug_ratio * np.trace(D) / m * np.eye(m)
            quad_term = float(self.a @ D @ self.a)
            out.append(0.5 * m * quad_term / self.quad - 0.5 * float(np.sum(Kinv * D)))
        return np.array(out)


def log_likelihood(data, params, prior):
    """Gaussian log-likelihood of the observations, amplitude ``params.sigma2``."""
    if not params.sigma2 > 0:
        raise ValueError("sigma2 must be strictly positive")
    t = _Terms(data, params, prior)
    m = data.m
    return float(
        -0.5 * m * LOG_2PI
        - 0.5 * m * np.log(params.sigma2)
        - 0.5 * t.logdet
        - 0.5 * t.quad / params.sigma2
    )


def sigma2_ml(data, params, prior):
    """Closed-form maximum-likelihood amplitude ``q' Kbar^{-1} q / m``."""
    _check(data)
    if not np.any(data.q):
        raise DegenerateDataError("all observations are zero; sigma^2_ML would vanish")
    return _Terms(data, params, prior).quad / data.m


def profile_log_likelihood(data, params, prior):
    _check(data)
    if not np.any(data.q):
        raise DegenerateDataError("all observations are zero; sigma^2_ML would vanish")
    t = _Terms(data, params, prior)
    return float(-0.5 * data.m * np.log(t.quad) - 0.5 * t.logdet)


def profile_constant(m):
    """Additive constant C with log_likelihood(sigma_ML) = profile + C."""
    return -0.5 * m * LOG_2PI - 0.5 * m + 0.5 * m * np.log(m)


def profile_gradient(data, params, prior):
    """Gradient of the profile likelihood w.r.t. ``params.free_names()``."""
    _check(data)
    if not np.any(data.q):
        raise DegenerateDataError("all observations are zero; sigma^2_ML would vanish")
    return _Terms(data, params, prior).gradient()


@dataclass(frozen=True)
class FitConfig:
    """Settings for maximum-likelihood fitting.

    ``bounds`` maps a free-parameter name (``rho_G``, ``rho_E``, ``ell_h``,
    ``ell_t1``.., ``alpha``) to a (lower, upper) box in natural units; the
    optimizer works on their logarithms. Names not listed use the defaults.
    """

    learn_alpha: bool = False
    alpha: float = 1.0
    stationary: bool = False
    bounds: dict = field(default_factory=dict)
    restarts: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1 or not self.grad_tol > 0:
            raise ValueError("restarts, max_iters and grad_tol must be positive")
        for name, (lo, hi) in self.bounds.items():
            if not (np.isfinite(lo) and np.isfinite(hi) and 0 < lo < hi):
                raise ValueError(f"bad bounds for {name}: ({lo}, {hi})")
        if self.stationary and self.learn_alpha:
            raise ValueError("the stationary ablation fixes alpha = 0; it cannot be learned")

    def bounds_for(self, name):
        if name in self.bounds:
            return tuple(float(x) for x in self.bounds[name])
        return DEFAULT_ALPHA_BOUNDS if name == "alpha" else DEFAULT_BOUNDS

    def template(self, p):
        """Hyperparameters carrying the structural choices of this config."""
        return Hyperparameters(
            ell_t=(1.0,) * p,
            alpha=0.0 if self.stationary else self.alpha,
            alpha_learned=self.learn_alpha,
            stationary=self.stationary,
        )


@dataclass
class RestartRecord:
    index: int
    initial: list
    initial_profile: float
    final_profile: float
    gradient_norm: float
    iterations: int
    success: bool
    message: str


@dataclass
class FitResult:
    params: object
    log_likelihood: float
    profile_log_likelihood: float
    converged: bool
    gradient_norm: float
    restart_index: int
    restarts: list = field(default_factory=list)

    def diagnostics(self):
        return {
            "params": self.params.as_dict(),
            "free_names": self.params.free_names(),
            "log_likelihood": self.log_likelihood,
            "profile_log_likelihood": self.profile_log_likelihood,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "restart_index": self.restart_index,
            "restarts": [vars(r) for r in self.restarts],
        }


def _projected_norm(x, g, lo, hi):
    """Norm of the ascent gradient after removing components blocked by bounds."""
    g = g.copy()
    at_lo = np.isclose(x, lo, rtol=0, atol=1e-8) & (g < 0)
    at_hi = np.isclose(x, hi, rtol=0, atol=1e-8) & (g > 0)
    g[at_lo | at_hi] = 0.0
    return float(np.linalg.norm(g))


def fit(data, config, prior, params=None):
    """Maximum-likelihood hyperparameters by multi-start L-BFGS-B.

    Returns the best restart. ``converged`` is False when no restart met the
    optimizer's convergence test; the best point found is still returned.
    """
    _check(data)
    if data.n < 2:
        raise ValueError("fitting needs data at two or more distinct resolutions")
    template = params if params is not None else config.template(prior.p)
    names = template.free_names()
    lo = np.log([config.bounds_for(n)[0] for n in names])
    hi = np.log([config.bounds_for(n)[1] for n in names])
    rng = np.random.default_rng(config.seed)

    def negative(x):
        theta = template.with_free(np.exp(x))
        try:
            terms = _Terms(data, theta, prior)
            if not terms.quad > 0:
                return 1e300, np.zeros_like(x)
            value = -0.5 * data.m * np.log(terms.quad) - 0.5 * terms.logdet
            grad = terms.gradient() * np.exp(x)
        except BBPNError:
            return 1e300, np.zeros_like(x)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            return 1e300, np.zeros_like(x)
        return -value, -grad

    records = []
    best = None
    for k in range(config.restarts):
        x0 = rng.uniform(lo, hi)
        f0, _ = negative(x0)
        res = scipy.optimize.minimize(
            negative, x0, jac=True, method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"maxiter": config.max_iters, "gtol": config.grad_tol * 1e-2, "ftol": 1e-13},
        )
        f, g = negative(res.x)
        gnorm = _projected_norm(res.x, -g, lo, hi)
        ok = bool(f < 1e299) and (res.success or gnorm < config.grad_tol)
        rec = RestartRecord(
            index=k,
            initial=[float(v) for v in np.exp(x0)],
            initial_profile=float(-f0),
            final_profile=float(-f),
            gradient_norm=gnorm,
            iterations=int(res.nit),
            success=ok,
            message=str(res.message),
        )
        records.append(rec)
        log.debug("restart %d: profile %.6g, |g| %.3g, %s", k, -f, gnorm, res.message)
        if f < 1e299 and (best is None or f < best[0]):
            best = (f, res.x, k, gnorm, ok)

    if best is None:
        return FitResult(template, float("nan"), float("nan"), False, float("nan"), -1, records)

    f, x, k, gnorm, ok = best
    theta = template.with_free(np.exp(x))
    s2 = sigma2_ml(data, theta, prior)
    theta = replace(theta, sigma2=s2)
    profile = -f
    return FitResult(
        params=theta,
        log_likelihood=float(profile + profile_constant(data.m)),
        profile_log_likelihood=float(profile),
        converged=bool(any(r.success for r in records) and ok),
        gradient_norm=gnorm,
        restart_index=k,
        restarts=records,
    )
