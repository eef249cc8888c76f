"""Drift-free problem on a truncated square (two space dimensions).

The elliptic operator is built from the factor matrix ``a`` through
``b = a a^T``:

    L z = b11 z_xx + 2 b12 z_xy + b22 z_yy,

discretized with 3-point stencils on the axes and the 4-corner centered
stencil for the cross term, all closed by zero ghosts.  The implicit step
solves ``lam*y - L(value(m0*y)) = eta`` by Newton with a sparse 9-point
Jacobian; without drift the resolvent is an L1 contraction with constant
exactly ``1/lam``.

The centered cross stencil is not sign-preserving for strongly anisotropic
``b``; when ``2|b12| > min(b11, b22)`` a warning is issued and comparison
style checks should be skipped.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .conjugate import ConjugateHamiltonian

__all__ = [
    "Grid2D",
    "MildSolution2D",
    "Problem2D",
    "apply_L",
    "mild_solve_2d",
    "solve_L",
    "solve_resolvent_2d",
]


@dataclass(frozen=True)
class Grid2D:
    """Uniform mesh on the square [-L, L]^2, odd node count per axis."""

    half_width: float
    n: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        if self.n < 5 or self.n % 2 == 0:
            raise ValueError(f"node count must be odd and >= 5, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return self.h * (np.arange(self.n) - (self.n - 1) // 2)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) with X varying along axis 0 and Y along axis 1."""
        return np.meshgrid(self.x, self.x, indexing="ij")

    def norm1(self, values) -> float:
        return self.h**2 * float(np.sum(np.abs(values)))

    def integral(self, values) -> float:
        return self.h**2 * float(np.sum(values))


@dataclass(frozen=True)
class Problem2D:
    """Factor matrix, scalar volatility, data tables, and horizon."""

    grid: Grid2D
    a: np.ndarray
    sigma0: np.ndarray
    initial: np.ndarray
    source: np.ndarray
    horizon: float
    conj: ConjugateHamiltonian

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        object.__setattr__(self, "a", a)
        if a.shape[0] != 2:
            raise ValueError(f"factor matrix needs 2 rows, got {a.shape}")
        b = a @ a.T
        eigs = np.linalg.eigvalsh(b)
        if eigs.min() <= 0:
            raise ValueError("a a^T must be positive definite")
        n = self.grid.n
        for name in ("sigma0", "initial", "source"):
            t = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, t)
            if t.shape != (n, n):
                raise ValueError(f"{name} has shape {t.shape}, "
                                 f"expected ({n}, {n})")
        if float(np.min(np.abs(self.sigma0))) <= 0:
            raise ValueError("sigma0 must be bounded away from zero")
        if 2.0 * abs(b[0, 1]) > min(b[0, 0], b[1, 1]):
            warnings.warn(
                "cross term dominates the axis terms; the centered stencil "
                "is not sign-preserving, skip comparison-principle checks",
                RuntimeWarning, stacklevel=2)

    @cached_property
    def b(self) -> np.ndarray:
        return self.a @ self.a.T

    @cached_property
    def half_sigma0_sq(self) -> np.ndarray:
        return 0.5 * self.sigma0**2

    @cached_property
    def operator_matrix(self) -> sp.csr_matrix:
        """Sparse 9-point matrix of L acting on row-major flattened fields."""
        n, h = self.grid.n, self.grid.h
        b = self.b
        eye = sp.identity(n, format="csr")
        second = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1],
                          shape=(n, n), format="csr") / h**2
        first = sp.diags([-1.0, 1.0], [-1, 1], shape=(n, n),
                         format="csr") / (2.0 * h)
        lap = (b[0, 0] * sp.kron(second, eye)
               + b[1, 1] * sp.kron(eye, second)
               + 2.0 * b[0, 1] * sp.kron(first, first))
        return lap.tocsr()


def apply_L(problem: Problem2D, z) -> np.ndarray:
    """b11 z_xx + 2 b12 z_xy + b22 z_yy with zero ghost values."""
    z = np.asarray(z, dtype=float)
    n, h = problem.grid.n, problem.grid.h
    b = problem.b
    p = np.zeros((n + 2, n + 2))
    p[1:-1, 1:-1] = z
    zxx = (p[2:, 1:-1] - 2.0 * z + p[:-2, 1:-1]) / h**2
    zyy = (p[1:-1, 2:] - 2.0 * z + p[1:-1, :-2]) / h**2
    zxy = (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2]) / (4.0 * h**2)
    return b[0, 0] * zxx + b[1, 1] * zyy + 2.0 * b[0, 1] * zxy


def solve_L(problem: Problem2D, z) -> np.ndarray:
    """Solve -L(phi) = z with phi = 0 on the boundary ring."""
    n = problem.grid.n
    z = np.asarray(z, dtype=float)
    interior = np.zeros((n, n), dtype=bool)
    interior[1:-1, 1:-1] = True
    idx = np.flatnonzero(interior.ravel())
    lap = problem.operator_matrix
    system = (-lap[idx][:, idx]).tocsc()
    phi = np.zeros(n * n)
    phi[idx] = spsolve(system, z.ravel()[idx])
    return phi.reshape(n, n)


def _residual_2d(problem, lam, y_flat, eta_flat):
    m = problem.half_sigma0_sq.ravel()
    w = problem.conj.value(m * y_flat)
    return lam * y_flat - problem.operator_matrix @ w - eta_flat


def solve_resolvent_2d(problem: Problem2D, lam: float, eta,
                       tol_res: float = 1e-10, max_iter: int = 60,
                       y_init=None) -> tuple[np.ndarray, float, int]:
    """Newton solve of lam*y - L(value(m0*y)) = eta on the full node set.

    Returns (y, residual_l1, iterations).
    """
    grid = problem.grid
    eta_flat = np.asarray(eta, dtype=float).ravel()
    m = problem.half_sigma0_sq.ravel()
    tol = tol_res * max(1.0, grid.norm1(eta))
    y = (np.asarray(y_init, dtype=float).ravel().copy()
         if y_init is not None else eta_flat / lam)
    lap = problem.operator_matrix
    r = _residual_2d(problem, lam, y, eta_flat)
    rnorm = grid.h**2 * float(np.sum(np.abs(r)))
    eye = sp.identity(lap.shape[0], format="csr")
    for it in range(max_iter):
        if rnorm <= tol:
            return y.reshape(grid.n, grid.n), rnorm, it
        slope = problem.conj.derivative(m * y) * m
        jac = (lam * eye - lap @ sp.diags(slope)).tocsc()
        delta = spsolve(jac, -r)
        omega = 1.0
        for _ in range(30):
            y_try = y + omega * delta
            r_try = _residual_2d(problem, lam, y_try, eta_flat)
            rnorm_try = grid.h**2 * float(np.sum(np.abs(r_try)))
            if np.isfinite(rnorm_try) and rnorm_try < rnorm:
                y, r, rnorm = y_try, r_try, rnorm_try
                break
            omega *= 0.5
        else:
            raise RuntimeError(
                f"2-D Newton stalled at residual {rnorm:.3e}")
    if rnorm > tol:
        raise RuntimeError(
            f"2-D Newton budget exhausted at residual {rnorm:.3e}")
    return y.reshape(grid.n, grid.n), rnorm, max_iter


@dataclass
class MildSolution2D:
    eps: float
    grid: Grid2D
    times: np.ndarray
    snapshots: np.ndarray
    masses: np.ndarray
    residuals: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]


def mild_solve_2d(problem: Problem2D, eps: float,
                  tol_res: float = 1e-10) -> MildSolution2D:
    """Implicit stepping of y_t - L(value(m0*y)) = source over the horizon."""
    if not eps > 0:
        raise ValueError(f"step size must be positive, got {eps}")
    T = problem.horizon
    n_full = int(math.floor(T / eps + 1e-12))
    remainder = T - n_full * eps
    if remainder <= eps / 100.0:
        remainder = 0.0
    lengths = [eps] * n_full + ([remainder] if remainder else [])
    grid = problem.grid
    y = problem.initial.copy()
    times = [0.0]
    snaps = [y.copy()]
    masses = [grid.integral(y)]
    residuals = [0.0]
    t = 0.0
    for dt in lengths:
        eta = problem.source + y / dt
        y, rnorm, _ = solve_resolvent_2d(problem, 1.0 / dt, eta,
                                         tol_res=tol_res, y_init=y)
        t += dt
        times.append(t)
        snaps.append(y.copy())
        masses.append(grid.integral(y))
        residuals.append(rnorm)
    return MildSolution2D(eps=eps, grid=grid, times=np.asarray(times),
                          snapshots=np.asarray(snaps),
                          masses=np.asarray(masses),
                          residuals=np.asarray(residuals))
