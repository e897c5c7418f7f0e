"""Built-in numerical methods wrapped as dataset generators.

Each adapter maps a resolution h to a list of ``(t, q(h, t))`` pairs, with
``t`` a tuple of ordinate coordinates (empty for scalar outputs). Adapters
are registered by name so configuration files and the CLI can refer to them.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..dataset import HParameterization
from . import eigen, kse, ode, quadrature

__all__ = ["ProblemAdapter", "REGISTRY", "make_adapter", "register"]


@dataclass(frozen=True, eq=False)
class ProblemAdapter:
    """Uniform interface to a traditional numerical method.

    ``independent_outputs`` marks problems whose first ordinate coordinate
    indexes outputs that are modelled as a priori independent.
    """

    name: str
    run: Callable
    dim: int
    query: np.ndarray
    order_hint: Optional[float] = None
    truth: Optional[Callable] = None
    independent_outputs: bool = False
    h_grid: tuple = ()
    meta: dict = field(default_factory=dict)

    def truth_at(self, query):
        if self.truth is None:
            return None
        return np.array([self.truth(tuple(t)) for t in np.asarray(query).reshape(len(query), -1)])


REGISTRY = {}


def register(name):
    def deco(fn):
        REGISTRY[name] = fn
        return fn

    return deco


def make_adapter(name, **params):
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; known: {sorted(REGISTRY)}") from None
    return factory(**params)


@register("riemann")
def riemann(a=0.0, b=1.0, h_grid=(0.08, 0.04, 0.02, 0.01)):
    f = quadrature.oscillatory_integrand

    def run(h):
        return [((), quadrature.riemann_sum(f, a, b, h))]

    exact = quadrature.EXACT_INTEGRAL if (a, b) == (0.0, 1.0) else None
    return ProblemAdapter(
        "riemann", run, dim=0, query=np.zeros((1, 0)), order_hint=1.0,
        truth=(lambda t: exact) if exact is not None else None, h_grid=tuple(h_grid),
    )


@register("lotka_volterra")
def lotka_volterra(solver="euler", y0=ode.LV_Y0, t_end=ode.LV_T_END, seed=None,
                   y0_spread=0.0, h_ref=1e-3, h_grid=tuple(2.0**-i for i in range(1, 7))):
    """Final state of the Lotka-Volterra problem.

    With ``y0_spread > 0`` the initial condition is drawn uniformly from
    ``y0 +/- y0_spread`` using ``seed``; this gives independent repetitions
    for calibration studies.
    """
    step, order = ode.SOLVERS[solver]
    y0 = tuple(float(v) for v in y0)
    if y0_spread > 0:
        rng = np.random.default_rng(seed)
        y0 = tuple(float(v) for v in np.asarray(y0) + rng.uniform(-y0_spread, y0_spread, 2))

    def run(h):
        final = step(ode.lotka_volterra, y0, t_end, h).final
        return [((0.0,), float(final[0])), ((1.0,), float(final[1]))]

    def truth(t):
        return ode.lotka_volterra_reference(y0, float(t_end), h_ref)[int(round(t[0]))]

    return ProblemAdapter(
        f"lotka_volterra_{solver}", run, dim=1, query=np.array([[0.0], [1.0]]),
        order_hint=order, truth=truth, independent_outputs=True, h_grid=tuple(h_grid),
        meta={"y0": list(y0), "t_end": t_end},
    )


@register("qr_laplacian")
def qr_laplacian(l=5, m=2, iterations=(1, 2, 3, 4, 5), h_power=1.0):
    """Diagonal of the unshifted QR iterate A_w, with h = w^(-h_power)."""
    spec = eigen.LaplacianSpec(l, m)
    param = HParameterization(power=h_power)
    w_max = max(iterations)
    diags = eigen.qr_iteration(eigen.laplacian_matrix(spec), w_max)
    truth_vals = eigen.laplacian_eigenvalues(spec)[::-1]  # A_w -> diag, descending

    def run(h):
        w = int(round(param.to_w(h)))
        if not 1 <= w <= w_max:
            raise ValueError(f"h={h} maps to iteration {w}, outside 1..{w_max}")
        return [((float(i + 1),), float(d)) for i, d in enumerate(diags[w - 1])]

    n = spec.size
    return ProblemAdapter(
        "qr_laplacian", run, dim=1, query=np.arange(1.0, n + 1).reshape(-1, 1),
        truth=lambda t: float(truth_vals[int(round(t[0])) - 1]),
        h_grid=tuple(param.to_h(w) for w in sorted(iterations)),
        meta={"l": l, "m": m, "h_power": h_power},
    )


@register("tensor_power")
def tensor_power(n=6, m=6, seed=0, shift=None, iterations=(1, 2, 3, 4, 5), h_power=2.0,
                 truth_iterations=50, tol=1e-10):
    """Eigenvalue estimates lambda_w of the shifted power method, h = w^(-h_power).

    The truth is lambda at ``truth_iterations``; the fully converged pair is
    reported in ``meta`` alongside its eigen-residual.
    """
    A = eigen.random_symmetric_tensor(n, m, seed=seed)
    rng = np.random.default_rng(seed + 1)
    x0 = rng.standard_normal(n)
    x0 /= np.linalg.norm(x0)
    param = HParameterization(power=h_power)
    w_max = max(iterations)
    traj = eigen.shifted_power_method(A, x0, shift, max(w_max, truth_iterations))
    lam_truth = traj[truth_iterations - 1][0]
    lam_star, x_star, k_star = eigen.converge_power_method(A, x0, shift, tol=tol)

    def run(h):
        w = int(round(param.to_w(h)))
        if not 1 <= w <= w_max:
            raise ValueError(f"h={h} maps to iteration {w}, outside 1..{w_max}")
        return [((), traj[w - 1][0])]

    return ProblemAdapter(
        "tensor_power", run, dim=0, query=np.zeros((1, 0)), truth=lambda t: lam_truth,
        h_grid=tuple(param.to_h(w) for w in sorted(iterations)),
        meta={"n": n, "m": m, "seed": seed, "lambda_truth": lam_truth,
              "lambda_converged": lam_star, "converged_iterations": k_star,
              "residual": eigen.eigen_residual(A, lam_star, x_star)},
    )


@register("kse")
def kuramoto_sivashinsky(N=128, L=16.0, t_end=10.0, amplitude=1.0, width=0.01, dealias=True,
                         h_grid=(0.1, 0.05, 0.02), reference_dt=0.0025, data_stride=1,
                         query_stride=1):
    """KSE solution u(x, t_end) on grid points, with h the ETDRK4 time step."""
    base = kse.KSEConfig(N=N, L=L, dt=reference_dt, t_end=t_end, amplitude=amplitude,
                         width=width, dealias=dealias)
    x = base.x
    data_idx = np.arange(0, N, data_stride)
    query_idx = np.arange(0, N, query_stride)

    def run(h):
        sol = kse.kse_cached(_with_dt(base, h))
        return [((float(x[i]),), float(sol.u[i])) for i in data_idx]

    @functools.lru_cache(maxsize=1)
    def reference():
        return kse.kse_cached(base).u

    def truth(t):
        i = int(np.argmin(np.abs(x - t[0])))
        if abs(x[i] - t[0]) < 1e-9 * base.dx:
            return float(reference()[i])
        return float(kse.spectral_interpolate(reference(), L, [t[0]])[0])

    return ProblemAdapter(
        "kse", run, dim=1, query=x[query_idx].reshape(-1, 1), order_hint=4.0, truth=truth,
        h_grid=tuple(h_grid), meta={"N": N, "L": L, "t_end": t_end, "reference_dt": reference_dt},
    )


def _with_dt(config, dt):
    from dataclasses import replace

    return replace(config, dt=float(dt))
