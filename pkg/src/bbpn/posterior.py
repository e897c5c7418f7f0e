"""Gaussian conditioning of the prior on a dataset, and the h = 0 marginal."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .exceptions import ConditioningError, EmptyDatasetError
from .kernel import assemble_gram, cross_covariance

NUGGET_TAU = 1e-10
MAX_ESCALATIONS = 5


class Factor(NamedTuple):
    L: np.ndarray  # lower Cholesky factor of K + nugget * I
    nugget: float


def factorize(K, tau=NUGGET_TAU, max_escalations=MAX_ESCALATIONS):
    """Cholesky factor of ``K + tau * trace(K)/m * I``.

    On failure the nugget is multiplied by 10, at most ``max_escalations``
    times, before a :class:`ConditioningError` is raised.
    """
    K = np.asarray(K, dtype=float)
    m = K.shape[0]
    scale = np.trace(K) / m if m else 0.0
    nugget = tau * scale if scale > 0 else tau
    for _ in range(max_escalations + 1):
        try:
            L = scipy.linalg.cholesky(K + nugget * np.eye(m), lower=True, check_finite=True)
            return Factor(L, nugget)
        except (np.linalg.LinAlgError, ValueError):
            nugget *= 10.0
    try:
        cond = float(np.linalg.cond(K))
    except np.linalg.LinAlgError:
        cond = float("inf")
    raise ConditioningError(
        f"Gram matrix of size {m} is not positive definite (condition estimate {cond:.3e})",
        condition_estimate=cond,
    )


def cho_solve(factor, b):
    return scipy.linalg.cho_solve((factor.L, True), b, check_finite=False)


@dataclass(frozen=True, eq=False)
class ConditionedModel:
    dataset: object
    params: object
    prior: object
    factor: Factor
    weights: np.ndarray  # K_Q^{-1} q

    @property
    def gram(self):
        return assemble_gram(self.dataset, self.params, self.prior)


@dataclass(frozen=True, eq=False)
class LimitPosterior:
    """Joint Gaussian over the quantity of interest at query ordinates T'."""

    query: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def variance(self):
        return np.diag(self.covariance).copy()

    @property
    def sd(self):
        return np.sqrt(self.variance)

    def __len__(self):
        return len(self.mean)


def condition(data, params, prior):
    """Condition the prior on ``data``; see :class:`ConditionedModel`."""
    if data is None or data.m == 0:
        raise EmptyDatasetError("cannot condition on an empty dataset")
    K = assemble_gram(data, params, prior)
    factor = factorize(K)
    weights = cho_solve(factor, data.q)
    return ConditionedModel(data, params, prior, factor, weights)


def _ordinates(T, d, n=None):
    """Reshape to (rows, d); with d = 0 the row count comes from the leading axis or n."""
    T = np.asarray(T, dtype=float)
    if d > 0:
        return T.reshape(-1, d)
    if T.ndim >= 2:
        rows = T.shape[0]
    elif n is not None:
        rows = n
    else:
        rows = T.shape[0] if T.ndim == 1 else 1
    return np.zeros((rows, 0))


def _query_arrays(model, h, T):
    d = model.prior.ordinate_dim
    T = _ordinates(T, d, n=np.size(h))
    h = np.broadcast_to(np.asarray(h, dtype=float), (len(T),)).copy()
    if np.any(h < 0):
        raise ValueError("query resolution h must be non-negative")
    return h, T


def predict_joint(model, h, T):
    """Posterior mean vector and covariance matrix at points (h_k, T_k)."""
    h, T = _query_arrays(model, h, T)
    data = model.dataset
    kx = cross_covariance(data.h, data.t, h, T, model.params, model.prior)
    kxx = cross_covariance(h, T, h, T, model.params, model.prior)
    mean = kx.T @ model.weights
    V = scipy.linalg.solve_triangular(model.factor.L, kx, lower=True, check_finite=False)
    cov = kxx - V.T @ V
    return mean, 0.5 * (cov + cov.T)


def predict(model, h, t):
    """Posterior (mean, variance) at a single point; variance clamped at 0."""
    mean, cov = predict_joint(model, [h], [t])
    return float(mean[0]), max(float(cov[0, 0]), 0.0)


def prior_variance(params, prior, h, t):
    h_arr = np.array([float(h)])
    t_arr = _ordinates(t, prior.ordinate_dim, n=1)[:1]
    return float(cross_covariance(h_arr, t_arr, h_arr, t_arr, params, prior)[0, 0])


def clamp_psd(cov):
    """Symmetrize and floor negative eigenvalues at zero."""
    cov = 0.5 * (cov + cov.T)
    if cov.size == 0:
        return cov
    w, V = np.linalg.eigh(cov)
    if w.min() >= 0:
        return cov
    w = np.clip(w, 0.0, None)
    out = (V * w) @ V.T
    return 0.5 * (out + out.T)


def predict_limit(model, query):
    """Joint posterior of Q(0, .) over the query ordinates."""
    d = model.prior.ordinate_dim
    query = _ordinates(query, d)
    if len(query) == 0:
        raise ValueError("query must contain at least one ordinate")
    mean, cov = predict_joint(model, np.zeros(len(query)), query)
    return LimitPosterior(query, mean, clamp_psd(cov))


def credible_band(post, width_sigmas):
    """(lower, upper) = mean -/+ width * sd."""
    if not width_sigmas > 0:
        raise ValueError("width_sigmas must be positive")
    sd = np.sqrt(np.clip(np.diag(post.covariance), 0.0, None))
    return post.mean - width_sigmas * sd, post.mean + width_sigmas * sd


def stack_posteriors(posts):
    """Combine independent limit posteriors into one block-diagonal posterior.

    Query ordinates are prefixed by the block index so they stay distinct.
    """
    posts = list(posts)
    mean = np.concatenate([p.mean for p in posts])
    cov = scipy.linalg.block_diag(*[p.covariance for p in posts])
    rows = []
    for k, p in enumerate(posts):
        for q in p.query:
            rows.append([float(k), *q])
    width = max(len(r) for r in rows)
    query = np.array([r + [0.0] * (width - len(r)) for r in rows])
    return LimitPosterior(query, mean, cov)
