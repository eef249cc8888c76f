"""Implicit elliptic solve behind every time step.

For a shift ``lam`` and right-hand side ``eta`` this module solves the nodal
system

    lam*y - (value(m*y))'' - f*y' + perturbation(y) = eta,       m = sigma^2/2,

with the nonlinear flux ``value`` from the conjugate machinery, monotone
upwinding of the transport term, and zero ghost values.  The primary
algorithm is damped Newton with the tridiagonal-plus-diagonal Jacobian (the
nonlocal part of the perturbation is kept on the residual side only, where it
is harmless because it is bounded).  Two globally convergent fallbacks cover
stalls: a shifted Picard iteration ``y <- R_{lam+delta}(eta + delta*y)`` and
a vanishing-viscosity homotopy that adds ``-nu*y'' + nu*value(m*y)`` and
tracks the solution down ``nu -> 0``.

The solved map is an L1 contraction in ``eta`` with constant
``1/(lam - lam0)``, ``lam0 = sup|f'|``; the returned object carries a freshly
recomputed residual as a certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .conjugate import ConjugateHamiltonian
from .drift import DriftData, apply_B
from .grid import Grid1D, diff1_upwind, diff2

__all__ = [
    "EllipticOperands",
    "ResolventConfig",
    "ResolventError",
    "ResolventResult",
    "apply_A",
    "solve_resolvent",
]

_NU_LADDER = (1e-2, 1e-4, 1e-6)


class ResolventError(RuntimeError):
    """Iteration budget exhausted; carries the last residual norm."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class EllipticOperands:
    """Frozen coefficients of the elliptic operator on one grid.

    ``half_sigma_sq`` is the multiplier ``sigma^2/2`` inside the flux;
    ``drift`` feeds the transport term and ``perturbation`` (usually the same
    drift object) the nonlocal lower-order term.  Pass ``perturbation=None``
    to run with the perturbation switched off.
    """

    grid: Grid1D
    conj: ConjugateHamiltonian
    half_sigma_sq: np.ndarray
    drift: Optional[DriftData] = None
    perturbation: Optional[DriftData] = None

    def __post_init__(self):
        m = np.asarray(self.half_sigma_sq, dtype=float)
        if m.shape != (self.grid.n,):
            raise ValueError(f"half_sigma_sq has shape {m.shape}, "
                             f"expected ({self.grid.n},)")
        if np.any(m <= 0) or not np.all(np.isfinite(m)):
            raise ValueError(
                "sigma^2/2 must be strictly positive and finite on the grid; "
                "vanishing volatility goes through the regularized sweep")

    @classmethod
    def build(cls, grid, conj, sigma, drift=None, use_perturbation=True):
        """Tabulate sigma (callable or array) and wire the perturbation."""
        sig = np.asarray(sigma(grid.x) if callable(sigma) else sigma,
                         dtype=float) + np.zeros(grid.n)
        return cls(grid, conj, 0.5 * sig * sig, drift,
                   drift if use_perturbation else None)

    @property
    def sigma_sq(self) -> np.ndarray:
        return 2.0 * self.half_sigma_sq

    @property
    def rho(self) -> float:
        """Volatility floor min|sigma| on the grid."""
        return float(np.sqrt(2.0 * np.min(self.half_sigma_sq)))

    @property
    def lam0(self) -> float:
        """Contraction shift floor, sup|f'| (0 without drift)."""
        return 0.0 if self.drift is None else self.drift.slope_sup


@dataclass(frozen=True)
class ResolventConfig:
    """Shift and iteration controls for one resolvent solve.

    ``tol_res`` is relative to ``max(1, ||eta||_1)``.  ``nu`` selects the
    regularized system directly (0 is the plain equation).  ``lam`` must
    exceed the drift slope bound for the contraction regime to apply.
    """

    lam: float
    tol_res: float = 1e-10
    max_iter: int = 100
    damping: float = 1.0
    picard_target: float = 0.5
    nu: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must be in (0, 1], got {self.damping}")
        if not 0 < self.picard_target < 1:
            raise ValueError("picard_target must be in (0, 1)")


@dataclass
class ResolventResult:
    y: np.ndarray
    residual: float
    iterations: int
    fallback: str = ""
    out_of_table: bool = False


def apply_A(ops: EllipticOperands, y) -> np.ndarray:
    """-(value(m*y))'' - f*y' with upwinded transport."""
    y = np.asarray(y, dtype=float)
    out = -diff2(ops.grid, ops.conj.value(ops.half_sigma_sq * y))
    if ops.drift is not None:
        f = ops.drift.f
        out -= f * diff1_upwind(ops.grid, y, f)
    return out


def _residual(ops, lam, nu, y, eta):
    r = lam * y + apply_A(ops, y) - eta
    if nu > 0:
        r -= nu * diff2(ops.grid, y)
        r += nu * ops.conj.value(ops.half_sigma_sq * y)
    if ops.perturbation is not None:
        r += apply_B(ops.perturbation, y)
    return r


def _jacobian_banded(ops, lam, nu, y):
    """Tridiagonal-plus-diagonal Jacobian in solve_banded layout."""
    grid, m = ops.grid, ops.half_sigma_sq
    h, h2 = grid.h, grid.h**2
    slope = ops.conj.derivative(m * y) * m
    c = slope + nu
    diag = lam + 2.0 * c / h2 + nu * slope
    upper = -c[1:] / h2
    lower = -c[:-1] / h2
    if ops.drift is not None:
        f = ops.drift.f
        diag = diag + np.abs(f) / h
        upper = upper - np.maximum(f[:-1], 0.0) / h
        lower = lower + np.minimum(f[1:], 0.0) / h
    if ops.perturbation is not None:
        diag = diag - 2.0 * ops.perturbation.f1
    ab = np.zeros((3, grid.n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return ab


def _newton(ops, lam, nu, eta, y0, tol, max_iter, damping):
    """Damped Newton; returns (y, iterations, residual_norm, converged)."""
    grid = ops.grid
    y = y0.copy()
    r = _residual(ops, lam, nu, y, eta)
    rnorm = grid.norm1(r)
    for it in range(max_iter):
        if rnorm <= tol:
            return y, it, rnorm, True
        ab = _jacobian_banded(ops, lam, nu, y)
        try:
            delta = solve_banded((1, 1), ab, -r)
        except np.linalg.LinAlgError:
            return y, it, rnorm, False
        omega = damping
        accepted = False
        for _ in range(30):
            y_try = y + omega * delta
            r_try = _residual(ops, lam, nu, y_try, eta)
            rnorm_try = grid.norm1(r_try)
            if np.isfinite(rnorm_try) and rnorm_try < rnorm:
                y, r, rnorm = y_try, r_try, rnorm_try
                accepted = True
                break
            omega *= 0.5
        if not accepted:
            return y, it + 1, rnorm, False
    return y, max_iter, rnorm, rnorm <= tol


def solve_resolvent(ops: EllipticOperands, cfg: ResolventConfig, eta,
                    y_init=None) -> ResolventResult:
    """Solve ``lam*y + A(y) + B(y) = eta`` to the configured L1 residual.

    Raises ``ValueError`` when the shift does not clear the drift slope
    bound, and ``ResolventError`` when every strategy exhausts its budget.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (ops.grid.n,):
        raise ValueError(f"eta has shape {eta.shape}, expected ({ops.grid.n},)")
    if not np.all(np.isfinite(eta)):
        raise ValueError("eta contains non-finite entries")
    lam0 = ops.lam0
    if cfg.lam <= lam0:
        raise ValueError(
            f"shift lam={cfg.lam:g} must exceed the drift slope bound "
            f"lam0={lam0:g}")
    tol = cfg.tol_res * max(1.0, ops.grid.norm1(eta))
    y0 = np.asarray(y_init, dtype=float).copy() if y_init is not None \
        else eta / cfg.lam

    y, iters, rnorm, ok = _newton(ops, cfg.lam, cfg.nu, eta, y0,
                                  tol, cfg.max_iter, cfg.damping)
    fallback = ""
    if not ok:
        y, iters2, rnorm, ok = _picard(ops, cfg, eta, y, tol)
        iters += iters2
        fallback = "picard"
    if not ok:
        y, iters3, rnorm, ok = _homotopy(ops, cfg, eta, y0, tol)
        iters += iters3
        fallback = "homotopy"
    if not ok:
        raise ResolventError("resolvent iteration budget exhausted", rnorm)

    certificate = ops.grid.norm1(_residual(ops, cfg.lam, cfg.nu, y, eta))
    out_of_table = not ops.conj.covers(ops.half_sigma_sq * y)
    return ResolventResult(y, certificate, iters, fallback, out_of_table)


def _picard(ops, cfg, eta, y, tol):
    """Shifted fixed point: y <- R_{lam+delta}(eta + delta*y)."""
    q = cfg.picard_target
    delta = max(q * (cfg.lam - ops.lam0) / (1.0 - q), 1.0)
    total = 0
    for _ in range(200):
        inner, it, rnorm_in, ok = _newton(
            ops, cfg.lam + delta, cfg.nu, eta + delta * y, y,
            tol * 0.5, cfg.max_iter, cfg.damping)
        total += it
        if not ok:
            return y, total, rnorm_in, False
        y = inner
        rnorm = ops.grid.norm1(_residual(ops, cfg.lam, cfg.nu, y, eta))
        if rnorm <= tol:
            return y, total, rnorm, True
    return y, total, rnorm, False


def _homotopy(ops, cfg, eta, y0, tol):
    """Warm-start chain down the viscosity ladder, finishing at the target."""
    y = y0.copy()
    total = 0
    rnorm = np.inf
    for nu in _NU_LADDER:
        if cfg.nu and nu <= cfg.nu:
            break
        y, it, rnorm, ok = _newton(ops, cfg.lam, nu, eta, y,
                                   tol, cfg.max_iter, cfg.damping)
        total += it
        if not ok:
            return y, total, rnorm, False
    y, it, rnorm, ok = _newton(ops, cfg.lam, cfg.nu, eta, y,
                               tol, cfg.max_iter, cfg.damping)
    return y, total + it, rnorm, ok
