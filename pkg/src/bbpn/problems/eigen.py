"""Matrix and tensor eigenvalue iterations used as data generators."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import BBPNError, BreakdownError


@dataclass(frozen=True)
class LaplacianSpec:
    l: int
    m: int

    def __post_init__(self):
        if self.l < 1 or self.m < 1:
            raise ValueError("l and m must be positive")

    @property
    def size(self):
        return self.l * self.m


def laplacian_matrix(spec):
    """Five-point-stencil Laplacian: block tridiagonal with B = tridiag(-1, 4, -1)."""
    l, m = spec.l, spec.m
    B = 4.0 * np.eye(l) - np.eye(l, k=1) - np.eye(l, k=-1)
    return np.kron(np.eye(m), B) - np.kron(np.eye(m, k=1) + np.eye(m, k=-1), np.eye(l))


def laplacian_eigenvalues(spec):
    """Closed-form eigenvalues 4 - 2cos(p pi/(l+1)) - 2cos(q pi/(m+1)), ascending."""
    p = np.arange(1, spec.l + 1)
    q = np.arange(1, spec.m + 1)
    vals = 4.0 - 2.0 * np.cos(p[:, None] * np.pi / (spec.l + 1)) - 2.0 * np.cos(
        q[None, :] * np.pi / (spec.m + 1)
    )
    return np.sort(vals.ravel())


def qr_iteration(A, iterations):
    """Unshifted QR iteration; row k-1 of the result is diag(A_k), k = 1..iterations."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("QR iteration needs a square matrix")
    if iterations < 1:
        raise ValueError("iterations must be positive")
    out = np.empty((iterations, A.shape[0]))
    for k in range(iterations):
        try:
            Q, R = np.linalg.qr(A)
        except np.linalg.LinAlgError as exc:
            raise BBPNError(f"QR factorization failed at iteration {k + 1}") from exc
        A = R @ Q
        if not np.all(np.isfinite(A)):
            raise BBPNError(f"non-finite iterate at QR iteration {k + 1}")
        out[k] = np.diag(A)
    return out


@dataclass(frozen=True, eq=False)
class SymmetricTensor:
    """Real m-th order n-dimensional tensor invariant under index permutations."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim < 2 or len(set(a.shape)) != 1:
            raise ValueError("tensor must be cubical with order >= 2")
        object.__setattr__(self, "entries", a)

    @property
    def order(self):
        return self.entries.ndim

    @property
    def dim(self):
        return self.entries.shape[0]

    def is_symmetric(self, samples=200, seed=0, atol=1e-12):
        rng = np.random.default_rng(seed)
        a = self.entries
        for _ in range(samples):
            idx = tuple(rng.integers(0, self.dim, size=self.order))
            perm = tuple(rng.permutation(idx))
            if abs(a[idx] - a[perm]) > atol:
                return False
        return True


def symmetrize(a):
    a = np.asarray(a, dtype=float)
    perms = list(itertools.permutations(range(a.ndim)))
    out = np.zeros_like(a)
    for perm in perms:
        out += np.transpose(a, perm)
    return out / len(perms)


def random_symmetric_tensor(n, m, seed=0):
    """Symmetrized i.i.d. standard normal tensor of order m and dimension n."""
    rng = np.random.default_rng(seed)
    return SymmetricTensor(symmetrize(rng.standard_normal((n,) * m)))


def rank_one_tensor(v, m):
    v = np.asarray(v, dtype=float)
    out = v
    for _ in range(m - 1):
        out = np.multiply.outer(out, v)
    return SymmetricTensor(out)


def tensor_apply(A, x):
    """A x^{m-1}: contract every index but the first with x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (A.dim,):
        raise ValueError(f"vector of length {A.dim} expected, got shape {x.shape}")
    y = A.entries
    for _ in range(A.order - 1):
        y = y @ x
    return y


def default_shift(A):
    return 2.0 * float(np.max(np.abs(A.entries)))


def shifted_power_method(A, x0, shift=None, iterations=50):
    """Shifted symmetric higher-order power method.

    Returns ``[(lambda_k, x_k)]`` for k = 1..iterations where
    ``x_k = normalize(A x_{k-1}^{m-1} + shift x_{k-1})`` and
    ``lambda_k = x_k . A x_k^{m-1}``.
    """
    x = np.asarray(x0, dtype=float)
    if not math.isclose(float(np.linalg.norm(x)), 1.0, rel_tol=1e-10):
        raise ValueError("starting vector must have unit norm")
    shift = default_shift(A) if shift is None else float(shift)
    out = []
    for k in range(iterations):
        y = tensor_apply(A, x) + shift * x
        norm = float(np.linalg.norm(y))
        if norm == 0.0 or not np.isfinite(norm):
            raise BreakdownError(f"zero update vector at iteration {k + 1}")
        x = y / norm
        out.append((float(x @ tensor_apply(A, x)), x))
    return out


def eigen_residual(A, lam, x):
    return float(np.linalg.norm(tensor_apply(A, x) - lam * x))


def converge_power_method(A, x0, shift=None, tol=1e-10, max_iterations=100000):
    """Run the shifted power method until the eigen-residual drops below tol."""
    x = np.asarray(x0, dtype=float)
    shift = default_shift(A) if shift is None else float(shift)
    lam = float(x @ tensor_apply(A, x))
    for k in range(max_iterations):
        if eigen_residual(A, lam, x) < tol:
            return lam, x, k
        lam, x = shifted_power_method(A, x, shift, 1)[0]
    raise BBPNError(f"power method did not reach residual {tol} in {max_iterations} iterations")
