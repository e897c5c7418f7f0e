import math
from dataclasses import replace

import numpy as np
import pytest

import oracles
from bbpn import DegenerateDataError, FitConfig, build, fit
from bbpn.kernel import BasisSet, Hyperparameters, Prior, assemble_gram
from bbpn.likelihood import (
    log_likelihood,
    profile_constant,
    profile_gradient,
    profile_log_likelihood,
    sigma2_ml,
)

NO_BASIS = Prior.default(p=1, basis=BasisSet.empty())


def _unit_gram_data(values, rho_G=1.0):
    """Points whose normalized Gram is rho_G * I to well below test tolerance."""
    params = Hyperparameters(rho_G=rho_G, rho_E=1e-4, ell_t=(1e-3,))
    data = build([(1e-6, (100.0 * k,), v) for k, v in enumerate(values)])
    return data, params


def test_loglik_hand_values():
    data, params = _unit_gram_data([0.0])
    assert log_likelihood(data, params, NO_BASIS) == pytest.approx(-0.9189385, abs=1e-7)
    data, params = _unit_gram_data([1.0])
    assert log_likelihood(data, params, NO_BASIS) == pytest.approx(-1.4189385, abs=1e-7)


def test_loglik_increases_as_data_shrink(indexed_data, indexed_prior, indexed_params):
    vals = []
    for c in (1.0, 0.5, 0.1, 0.0):
        d = build([(h, t, c * q) for h, t, q in indexed_data.points()])
        vals.append(log_likelihood(d, indexed_params, indexed_prior))
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_loglik_matches_dense_oracle(indexed_data, indexed_prior, indexed_params):
    K = assemble_gram(indexed_data, replace(indexed_params, sigma2=1.0), indexed_prior)
    K = K + oracles.nugget(K) * np.eye(len(K))
    want = oracles.gaussian_loglik(K, indexed_data.q, math.sqrt(indexed_params.sigma2))
    assert log_likelihood(indexed_data, indexed_params, indexed_prior) == pytest.approx(want,
                                                                                      rel=1e-10)


def test_loglik_needs_positive_amplitude(indexed_data, indexed_prior, indexed_params):
    with pytest.raises(ValueError):
        log_likelihood(indexed_data, replace(indexed_params, sigma2=0.0), indexed_prior)


def test_sigma2_examples():
    data, params = _unit_gram_data([1.0, 1.0])
    assert sigma2_ml(data, params, NO_BASIS) == pytest.approx(1.0, rel=1e-9)
    data, params = _unit_gram_data([2.0, 2.0], rho_G=2.0)
    assert sigma2_ml(data, params, NO_BASIS) == pytest.approx(2.0, rel=1e-9)


def test_sigma2_is_quadratic_in_data(indexed_data, indexed_prior, indexed_params):
    s = sigma2_ml(indexed_data, indexed_params, indexed_prior)
    d3 = build([(h, t, 3.0 * q) for h, t, q in indexed_data.points()])
    assert sigma2_ml(d3, indexed_params, indexed_prior) == pytest.approx(9.0 * s, rel=1e-12)


def test_zero_data_is_degenerate(indexed_prior, indexed_params):
    d = build([(0.5, (0.0,), 0.0), (0.25, (0.0,), 0.0)])
    for fn in (sigma2_ml, profile_log_likelihood, profile_gradient):
        with pytest.raises(DegenerateDataError):
            fn(d, indexed_params, indexed_prior)


def test_profile_is_loglik_at_sigma_ml(indexed_data, indexed_prior, indexed_params):
    s2 = sigma2_ml(indexed_data, indexed_params, indexed_prior)
    full = log_likelihood(indexed_data, replace(indexed_params, sigma2=s2), indexed_prior)
    prof = profile_log_likelihood(indexed_data, indexed_params, indexed_prior)
    m = indexed_data.m
    C = -0.5 * m * math.log(2 * math.pi) - 0.5 * m + 0.5 * m * math.log(m)
    assert profile_constant(m) == pytest.approx(C, rel=1e-15)
    assert full - prof == pytest.approx(C, abs=1e-9)


def test_sigma_ml_is_grid_argmax(indexed_data, indexed_prior, indexed_params):
    s2 = sigma2_ml(indexed_data, indexed_params, indexed_prior)

    def ll(sigma):
        return log_likelihood(indexed_data, replace(indexed_params, sigma2=sigma**2),
                              indexed_prior)

    best = oracles.grid_argmax(ll, 0.05 * math.sqrt(s2), 20 * math.sqrt(s2))
    assert best**2 == pytest.approx(s2, rel=1e-4)


def test_profile_shift_under_rescaling(indexed_data, indexed_prior, indexed_params):
    c = 7.5
    d = build([(h, t, c * q) for h, t, q in indexed_data.points()])
    a = profile_log_likelihood(indexed_data, indexed_params, indexed_prior)
    b = profile_log_likelihood(d, indexed_params, indexed_prior)
    assert b - a == pytest.approx(-indexed_data.m * math.log(c), rel=1e-10)


def _fd_profile(data, params, prior, k, step=1e-4):
    x = params.free_vector()

    def f(v):
        return profile_log_likelihood(data, params.with_free(v), prior)

    dx = step * x[k]
    up, dn = x.copy(), x.copy()
    up[k] += dx
    dn[k] -= dx
    return (f(up) - f(dn)) / (2 * dx)


@pytest.mark.parametrize("trial", range(8))
def test_profile_gradient_matches_finite_differences(indexed_data, indexed_prior, trial):
    rng = np.random.default_rng(100 + trial)
    params = Hyperparameters(rho_G=math.exp(rng.uniform(-2, 2)), rho_E=math.exp(rng.uniform(-2, 3)),
                             ell_h=math.exp(rng.uniform(-2, 1)), ell_t=(math.exp(rng.uniform(-1, 1)),),
                             alpha=rng.uniform(0.5, 3.0), alpha_learned=True)
    g = profile_gradient(indexed_data, params, indexed_prior)
    for k in range(len(g)):
        fd = _fd_profile(indexed_data, params, indexed_prior, k)
        assert g[k] == pytest.approx(fd, rel=1e-5, abs=1e-8), params.free_names()[k]


def test_huge_error_scale_is_penalized(indexed_data, indexed_prior, indexed_params):
    params = replace(indexed_params, rho_E=1e6)
    assert profile_gradient(indexed_data, params, indexed_prior)[1] < 0


# -- fitting --------------------------------------------------------------


@pytest.fixture(scope="module")
def indexed_fit():
    rng = np.random.default_rng(7)
    pts = [(h, (t,), np.sin(t) + 0.5 * h * np.cos(t) + 0.02 * rng.standard_normal())
           for h in (0.4, 0.2, 0.1) for t in (0.0, 0.8, 1.6, 2.4)]
    data = build(pts)
    prior = Prior.default(p=1)
    cfg = FitConfig(learn_alpha=True, restarts=6, seed=3)
    return data, prior, cfg, fit(data, cfg, prior)


def test_fit_reaches_stationary_point(indexed_fit):
    data, prior, cfg, res = indexed_fit
    assert res.converged
    assert res.gradient_norm < cfg.grad_tol
    assert len(res.restarts) == cfg.restarts


def test_fit_beats_every_starting_point(indexed_fit):
    *_, res = indexed_fit
    assert all(res.profile_log_likelihood >= r.initial_profile for r in res.restarts)
    assert all(res.profile_log_likelihood >= r.final_profile - 1e-9 for r in res.restarts)


def test_fit_amplitude_is_closed_form(indexed_fit):
    data, prior, cfg, res = indexed_fit
    assert res.params.sigma2 == pytest.approx(sigma2_ml(data, res.params, prior), rel=1e-12)
    assert res.log_likelihood == pytest.approx(log_likelihood(data, res.params, prior), rel=1e-9)


def test_fit_respects_bounds(indexed_fit):
    data, prior, cfg, res = indexed_fit
    for name, value in zip(res.params.free_names(), res.params.free_vector()):
        lo, hi = cfg.bounds_for(name)
        assert lo * (1 - 1e-12) <= value <= hi * (1 + 1e-12)


def test_fit_slices_peak_at_optimum(indexed_fit):
    data, prior, cfg, res = indexed_fit
    x = res.params.free_vector()
    for k, name in enumerate(res.params.free_names()):
        lo, hi = cfg.bounds_for(name)
        grid = np.exp(np.linspace(np.log(lo), np.log(hi), 81))
        vals = []
        for g in grid:
            v = x.copy()
            v[k] = g
            vals.append(profile_log_likelihood(data, res.params.with_free(v), prior))
        assert max(vals) <= res.profile_log_likelihood + 1e-9
        step = np.log(grid[1] / grid[0])
        assert abs(np.log(grid[int(np.argmax(vals))] / x[k])) <= step + 1e-12 or np.ptp(vals) < 1e-6


def test_fit_needs_two_resolutions():
    data = build([(0.5, (0.0,), 1.0), (0.5, (1.0,), 2.0)])
    with pytest.raises(ValueError):
        fit(data, FitConfig(), Prior.default(p=1))


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(restarts=0)
    with pytest.raises(ValueError):
        FitConfig(bounds={"rho_G": (1.0, 0.5)})
    with pytest.raises(ValueError):
        FitConfig(bounds={"rho_G": (0.0, np.inf)})
    with pytest.raises(ValueError):
        FitConfig(stationary=True, learn_alpha=True)


def test_fit_recovers_error_length_scale_from_prior_draws():
    prior = Prior.default(p=1)
    theta = Hyperparameters(sigma2=1.0, rho_G=1.0, rho_E=4.0, ell_h=0.3, ell_t=(1.0,), alpha=1.0)
    grid = build([(h, (t,), 0.0) for h in np.linspace(1.0, 0.1, 10) for t in np.linspace(0, 6, 12)])
    K = assemble_gram(grid, theta, prior)
    L = np.linalg.cholesky(K + 1e-8 * np.eye(len(K)))
    for seed in (0, 1):
        q = L @ np.random.default_rng(seed).standard_normal(len(K))
        data = build([(h, t, v) for (h, t, _), v in zip(grid.points(), q)])
        res = fit(data, FitConfig(restarts=5, seed=seed), prior)
        assert 0.3 / 3 <= res.params.ell_h <= 0.3 * 3


def test_fit_is_deterministic_for_a_seed(indexed_fit):
    data, prior, cfg, res = indexed_fit
    again = fit(data, cfg, prior)
    assert again.params == res.params
