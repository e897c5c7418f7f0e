"""Covariance model for the (resolution, ordinate) process.

The prior on q(h, t) is the sum of three independent parts:

* a finite basis expansion ``Z . b(t)`` with ``Z ~ N(0, sigma^2 I)``,
* a stationary process ``G`` over ordinates with kernel ``sigma^2 rho_G k_G``,
* an error process ``E`` with kernel ``sigma^2 rho_E k_E`` where
  ``k_E = (h h')^alpha psi(|h - h'| / ell_h) k_G(t, t')``.

The factor ``(h h')^alpha`` makes ``E`` vanish at ``h = 0``, so the marginal at
the limit only sees the first two parts.

Ordinates are stored as flat float vectors; ``Prior.block_dims`` says how the
coordinates are grouped into the p tensor-product factors.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

_SQRT3 = np.sqrt(3.0)


class Profile(str, enum.Enum):
    """Radial profile phi with phi(0) = 1."""

    MATERN12 = "matern12"
    MATERN32 = "matern32"
    GAUSSIAN = "gaussian"


def _check_eps(eps):
    eps = np.asarray(eps, dtype=float)
    if np.any(eps < 0):
        raise ValueError("profile argument must be non-negative")
    return eps


def eval_profile(profile, eps):
    """Evaluate a radial profile at scaled distance(s) ``eps >= 0``."""
    profile = Profile(profile)
    eps = _check_eps(eps)
    if profile is Profile.MATERN12:
        out = np.exp(-eps)
    elif profile is Profile.MATERN32:
        out = (1.0 + _SQRT3 * eps) * np.exp(-_SQRT3 * eps)
    else:
        out = np.exp(-0.5 * eps * eps)
    return float(out) if out.ndim == 0 else out


def profile_derivative(profile, eps):
    """d phi / d eps, used for length-scale gradients."""
    profile = Profile(profile)
    eps = _check_eps(eps)
    if profile is Profile.MATERN12:
        out = -np.exp(-eps)
    elif profile is Profile.MATERN32:
        out = -3.0 * eps * np.exp(-_SQRT3 * eps)
    else:
        out = -eps * np.exp(-0.5 * eps * eps)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Hyperparameters:
    """Parameters theta of the prior.

    ``sigma2`` is the overall amplitude; the remaining parameters shape the
    normalized kernel. ``alpha_learned`` marks alpha as a free parameter for
    maximum likelihood.
    """

    sigma2: float = 1.0
    rho_G: float = 1.0
    rho_E: float = 1.0
    ell_h: float = 1.0
    ell_t: tuple = ()
    alpha: float = 1.0
    alpha_learned: bool = False
    stationary: bool = False

    def __post_init__(self):
        object.__setattr__(self, "ell_t", tuple(float(x) for x in self.ell_t))
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        for name in ("rho_G", "rho_E", "ell_h"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if any(not ell > 0 for ell in self.ell_t):
            raise ValueError("ell_t entries must be strictly positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.alpha == 0 and not self.stationary:
            raise ValueError("alpha = 0 requires stationary=True (ablation only)")

    @property
    def p(self):
        return len(self.ell_t)

    def free_names(self):
        names = ["rho_G", "rho_E", "ell_h"] + [f"ell_t{i + 1}" for i in range(self.p)]
        if self.alpha_learned:
            names.append("alpha")
        return names

    def free_vector(self):
        vec = [self.rho_G, self.rho_E, self.ell_h, *self.ell_t]
        if self.alpha_learned:
            vec.append(self.alpha)
        return np.array(vec, dtype=float)

    def with_free(self, vec):
        vec = [float(x) for x in vec]
        p = self.p
        kw = dict(rho_G=vec[0], rho_E=vec[1], ell_h=vec[2], ell_t=tuple(vec[3:3 + p]))
        if self.alpha_learned:
            kw["alpha"] = vec[3 + p]
        return replace(self, **kw)

    def as_dict(self):
        return {
            "sigma2": self.sigma2,
            "rho_G": self.rho_G,
            "rho_E": self.rho_E,
            "ell_h": self.ell_h,
            "ell_t": list(self.ell_t),
            "alpha": self.alpha,
            "alpha_learned": self.alpha_learned,
            "stationary": self.stationary,
        }


@dataclass(frozen=True)
class BasisSet:
    """Finite collection of basis functions b_1..b_v on the ordinate space.

    Each function takes a flat ordinate vector and returns a float.
    """

    functions: tuple = ()
    names: tuple = ()

    @property
    def v(self):
        return len(self.functions)

    def evaluate(self, T):
        T = np.asarray(T, dtype=float)
        T = T.reshape(len(T), -1) if T.ndim != 2 else T
        out = np.empty((T.shape[0], self.v))
        for j, fn in enumerate(self.functions):
            out[:, j] = [fn(row) for row in T]
        return out

    @classmethod
    def empty(cls):
        return cls()

    @classmethod
    def constant(cls):
        return cls((_one,), ("1",))

    @classmethod
    def polynomial(cls, v, coordinate=0):
        """Monomials 1, t, ..., t^(v-1) in one ordinate coordinate."""
        fns = tuple(_Monomial(k, coordinate) for k in range(v))
        return cls(fns, tuple(f"t{coordinate + 1}^{k}" for k in range(v)))


def _one(t):
    return 1.0


@dataclass(frozen=True)
class _Monomial:
    power: int
    coordinate: int

    def __call__(self, t):
        if self.power == 0:
            return 1.0  # also valid for scalar quantities with no ordinate
        return float(t[self.coordinate]) ** self.power


@dataclass(frozen=True)
class Prior:
    """Structural choices of the model: profiles, basis, ordinate blocks.

    ``phis`` has one profile per ordinate block and ``block_dims`` the
    dimension of each block; ``p = len(phis)``.
    """

    psi: Profile = Profile.MATERN12
    phis: tuple = ()
    block_dims: tuple = ()
    basis: BasisSet = field(default_factory=BasisSet.constant)

    def __post_init__(self):
        object.__setattr__(self, "psi", Profile(self.psi))
        object.__setattr__(self, "phis", tuple(Profile(x) for x in self.phis))
        dims = tuple(self.block_dims) or (1,) * len(self.phis)
        if len(dims) != len(self.phis):
            raise ValueError("block_dims and phis must have the same length")
        object.__setattr__(self, "block_dims", dims)

    @property
    def p(self):
        return len(self.phis)

    @property
    def ordinate_dim(self):
        return int(sum(self.block_dims))

    @classmethod
    def default(cls, p=0, basis=None, profile=Profile.MATERN12):
        basis = BasisSet.constant() if basis is None else basis
        return cls(psi=profile, phis=(profile,) * p, basis=basis)


def _block_slices(block_dims):
    start = 0
    for d in block_dims:
        yield slice(start, start + d)
        start += d


class GramParts(NamedTuple):
    B: np.ndarray
    KG: np.ndarray
    H: np.ndarray  # (h h')^alpha psi(|h - h'| / ell_h)
    factors: list  # per-block phi_i matrices
    eps_t: list  # per-block scaled distances
    eps_h: np.ndarray
    hh: np.ndarray


def gram_parts(h1, T1, h2, T2, params, prior):
    """Component matrices of the normalized kernel between two point sets."""
    h1 = np.asarray(h1, dtype=float).ravel()
    h2 = np.asarray(h2, dtype=float).ravel()
    if np.any(h1 < 0) or np.any(h2 < 0):
        raise ValueError("resolutions h must be non-negative")
    d = prior.ordinate_dim
    T1 = np.asarray(T1, dtype=float).reshape(len(h1), d)
    T2 = np.asarray(T2, dtype=float).reshape(len(h2), d)
    if params.p != prior.p:
        raise ValueError(f"params carry {params.p} ordinate length-scales, prior has p={prior.p}")

    factors, eps_t = [], []
    KG = np.ones((len(h1), len(h2)))
    for sl, phi, ell in zip(_block_slices(prior.block_dims), prior.phis, params.ell_t):
        diff = T1[:, None, sl] - T2[None, :, sl]
        eps = np.sqrt(np.sum(diff * diff, axis=-1)) / ell
        F = eval_profile(phi, eps)
        F = np.asarray(F).reshape(len(h1), len(h2))
        factors.append(F)
        eps_t.append(eps)
        KG = KG * F

    hh = h1[:, None] * h2[None, :]
    eps_h = np.abs(h1[:, None] - h2[None, :]) / params.ell_h
    alpha = 0.0 if params.stationary else params.alpha
    H = np.power(hh, alpha) * np.asarray(eval_profile(prior.psi, eps_h)).reshape(hh.shape)

    if prior.basis.v:
        B = prior.basis.evaluate(T1) @ prior.basis.evaluate(T2).T
    else:
        B = np.zeros_like(KG)
    return GramParts(B, KG, H, factors, eps_t, eps_h, hh)


def cross_covariance(h1, T1, h2, T2, params, prior):
    """sigma^2 [B + rho_G K_G + rho_E K_E] between two point sets."""
    parts = gram_parts(h1, T1, h2, T2, params, prior)
    Kbar = parts.B + params.rho_G * parts.KG + params.rho_E * parts.H * parts.KG
    return params.sigma2 * Kbar


def _single(h, t, prior):
    t = np.asarray(t, dtype=float).reshape(1, prior.ordinate_dim)
    return np.array([float(h)]), t


def k_G(t, t2, params, prior):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    t2 = np.atleast_1d(np.asarray(t2, dtype=float))
    if t.size != prior.ordinate_dim or t2.size != prior.ordinate_dim:
        raise ValueError("ordinate block structure does not match the prior")
    parts = gram_parts([1.0], t, [1.0], t2, params, prior)
    return float(parts.KG[0, 0])


def k_E(h, t, h2, t2, params, prior):
    if h < 0 or h2 < 0:
        raise ValueError("resolutions h must be non-negative")
    a, ta = _single(h, t, prior)
    b, tb = _single(h2, t2, prior)
    parts = gram_parts(a, ta, b, tb, params, prior)
    return float(parts.H[0, 0] * parts.KG[0, 0])


def k_Q(h, t, h2, t2, params, prior):
    a, ta = _single(h, t, prior)
    b, tb = _single(h2, t2, prior)
    return float(cross_covariance(a, ta, b, tb, params, prior)[0, 0])


def assemble_gram(data, params, prior):
    """Gram matrix K_Q over a dataset in its stored (lexicographic) order.

    Call with ``sigma2=1`` for the normalized matrix. No nugget is added here.
    """
    return cross_covariance(data.h, data.t, data.h, data.t, params, prior)


def gram_gradients(data, params, prior):
    """Derivatives of the normalized Gram matrix w.r.t. each free parameter.

    Returned in the order of ``params.free_names()``; derivatives are taken in
    the natural (not log) parameterization.
    """
    parts = gram_parts(data.h, data.t, data.h, data.t, params, prior)
    KG, H = parts.KG, parts.H
    KE = H * KG
    grads = [KG, KE]

    alpha = 0.0 if params.stationary else params.alpha
    dpsi = np.asarray(profile_derivative(prior.psi, parts.eps_h)).reshape(H.shape)
    dH_dell = np.power(parts.hh, alpha) * dpsi * (-parts.eps_h / params.ell_h)
    grads.append(params.rho_E * dH_dell * KG)

    for i, ell in enumerate(params.ell_t):
        others = np.ones_like(KG)
        for j, F in enumerate(parts.factors):
            if j != i:
                others = others * F
        eps = parts.eps_t[i]
        dphi = np.asarray(profile_derivative(prior.phis[i], eps)).reshape(KG.shape)
        dKG = others * dphi * (-eps / ell)
        grads.append(params.rho_G * dKG + params.rho_E * H * dKG)

    if params.alpha_learned:
        with np.errstate(divide="ignore"):
            log_hh = np.where(parts.hh > 0, np.log(np.where(parts.hh > 0, parts.hh, 1.0)), 0.0)
        grads.append(params.rho_E * KE * log_hh)
    return grads
