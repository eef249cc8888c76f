"""Running control cost and its Legendre machinery.

The cost ``h`` acts on controls ``u >= 0`` only; everything here works with
the extended cost that is ``+inf`` for ``u < 0``.  The conjugate

    value(p) = sup_{u >= 0} (p*u - h(u))

is convex and nondecreasing, its derivative is the maximizing control (the
resolvent of the cost subgradient plus the normal cone at 0, hence clamped
at 0), and the potential is the antiderivative of the conjugate vanishing
at 0.  A closed-form quadratic backend covers ``h(u) = a1*u^2 + a2``; any
other convex cost goes through bracketed numeric maximization, optionally
tabulated once for fast vectorized evaluation inside the solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

__all__ = [
    "ConjugateHamiltonian",
    "CostValidationError",
    "NonConvexCostError",
    "RunningCost",
    "conjugate",
    "conjugate_derivative",
    "potential",
]


class CostValidationError(ValueError):
    """The supplied cost violates convexity or the quadratic lower bound."""


class NonConvexCostError(RuntimeError):
    """The maximizer bracket was not unimodal; the cost cannot be convex."""


@dataclass(frozen=True)
class RunningCost:
    """Convex control cost with quadratic coercivity.

    ``kind`` is ``"quadratic"`` (closed form ``a1*u^2 + a2``) or
    ``"callable"`` (user-supplied ``h``).  ``alpha1 > 0`` and ``alpha2 >= 0``
    certify the lower bound ``h(u) >= alpha1*u^2 + alpha2``, which is checked
    by sampling at construction together with midpoint convexity.
    """

    kind: str
    alpha1: float
    alpha2: float = 0.0
    h: Optional[Callable[[float], float]] = None
    probe_max: float = 10.0

    def __post_init__(self):
        if self.kind not in ("quadratic", "callable"):
            raise CostValidationError(f"unknown cost kind {self.kind!r}")
        if not self.alpha1 > 0:
            raise CostValidationError(f"alpha1 must be positive, got {self.alpha1}")
        if self.alpha2 < 0:
            raise CostValidationError(f"alpha2 must be nonnegative, got {self.alpha2}")
        if self.kind == "callable":
            if self.h is None:
                raise CostValidationError("callable cost needs the function h")
            self._validate_samples()

    @classmethod
    def quadratic(cls, alpha1: float = 1.0, alpha2: float = 0.0) -> "RunningCost":
        return cls(kind="quadratic", alpha1=alpha1, alpha2=alpha2)

    @classmethod
    def from_callable(cls, h, alpha1, alpha2=0.0, probe_max=10.0) -> "RunningCost":
        return cls(kind="callable", alpha1=alpha1, alpha2=alpha2, h=h,
                   probe_max=probe_max)

    def evaluate(self, u):
        """Cost of a control; only defined for u >= 0."""
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValueError("running cost is only defined for u >= 0")
        if self.kind == "quadratic":
            return self.alpha1 * u * u + self.alpha2
        if u.ndim == 0:
            return float(self.h(float(u)))
        return np.array([float(self.h(float(v))) for v in u])

    def _validate_samples(self, tol: float = 1e-9):
        u = np.linspace(0.0, self.probe_max, 201)
        vals = self.evaluate(u)
        if not np.all(np.isfinite(vals)):
            raise CostValidationError("cost is not finite on the probe grid")
        lower = self.alpha1 * u * u + self.alpha2
        scale = 1.0 + np.abs(vals)
        if np.any(vals < lower - tol * scale):
            k = int(np.argmax(lower - vals))
            raise CostValidationError(
                f"coercivity bound fails at u={u[k]:g}: h={vals[k]:g} < "
                f"{lower[k]:g}")
        mid = 0.5 * (vals[:-2] + vals[2:])
        if np.any(vals[1:-1] > mid + tol * scale[1:-1]):
            k = 1 + int(np.argmax(vals[1:-1] - mid))
            raise CostValidationError(f"midpoint convexity fails near u={u[k]:g}")


def _bracket_top(cost: RunningCost, p: float) -> float:
    # coercivity confines any maximizer of p*u - h(u) to this interval
    h0 = float(cost.evaluate(0.0))
    return (abs(p) + abs(h0)) / cost.alpha1 + 1.0


def _scan_unimodal(gain, top: float, samples: int = 65):
    """Coarse scan of the gain; raises if it has more than one interior peak."""
    u = np.linspace(0.0, top, samples)
    g = np.array([gain(v) for v in u])
    scale = 1e-10 * (1.0 + float(np.max(np.abs(g))))
    rises = g[1:] > g[:-1] + scale
    falls = g[1:] < g[:-1] - scale
    seen_fall = False
    for r, f in zip(rises, falls):
        if f:
            seen_fall = True
        elif r and seen_fall:
            raise NonConvexCostError(
                "gain p*u - h(u) is not unimodal; cost appears non-convex")
    return u, g


def _golden(gain, lo: float, hi: float, iters: int = 80) -> float:
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    gc, gd = gain(c), gain(d)
    for _ in range(iters):
        if b - a < 1e-14 * (1.0 + abs(a) + abs(b)):
            break
        if gc > gd:
            b, d, gd = d, c, gc
            c = b - invphi * (b - a)
            gc = gain(c)
        else:
            a, c, gc = c, d, gd
            d = a + invphi * (b - a)
            gd = gain(d)
    return 0.5 * (a + b)


def _newton_polish(gain, u: float, lo: float, hi: float, steps: int = 4) -> float:
    eps = 1e-6 * (1.0 + abs(u))
    if u - eps < lo or u + eps > hi:
        return u
    for _ in range(steps):
        if u - eps < lo or u + eps > hi:
            break
        g1 = (gain(u + eps) - gain(u - eps)) / (2 * eps)
        g2 = (gain(u + eps) - 2 * gain(u) + gain(u - eps)) / eps**2
        if not np.isfinite(g2) or g2 >= -1e-30:
            break
        step = g1 / g2
        u_new = min(max(u - step, lo), hi)
        if gain(u_new) < gain(u):
            break
        u = u_new
    return u


def _maximize(cost: RunningCost, p: float) -> tuple[float, float, bool]:
    """Smallest maximizer of p*u - h(u) over u >= 0, its value, and a tie flag."""
    def gain(u):
        return p * u - float(cost.evaluate(u))

    top = _bracket_top(cost, p)
    u_scan, g_scan = _scan_unimodal(gain, top)
    k = int(np.argmax(g_scan))
    step = u_scan[1] - u_scan[0]
    lo = max(0.0, u_scan[k] - step)
    hi = min(top, u_scan[k] + step)
    u_star = _golden(gain, lo, hi)
    if u_star > 0:
        u_star = _newton_polish(gain, u_star, 0.0, top)
    g_star = gain(u_star)
    if gain(0.0) >= g_star:
        return 0.0, gain(0.0), False
    # ties: bisect the rising edge to the smallest u attaining the maximum
    tie_tol = 1e-11 * (1.0 + abs(g_star))
    eligible = np.nonzero(g_scan >= g_star - tie_tol)[0]
    tie = eligible.size > 2
    if tie:
        first = int(eligible[0])
        a = u_scan[first - 1] if first > 0 else 0.0
        b = min(u_scan[first], u_star)
        for _ in range(80):
            mid = 0.5 * (a + b)
            if gain(mid) >= g_star - tie_tol:
                b = mid
            else:
                a = mid
        u_star = b
    return float(u_star), float(g_star), bool(tie)


def conjugate(cost: RunningCost, p: float) -> float:
    """sup over u >= 0 of (p*u - h(u))."""
    if cost.kind == "quadratic":
        return float(max(p, 0.0) ** 2 / (4.0 * cost.alpha1) - cost.alpha2)
    _, value, _ = _maximize(cost, float(p))
    return value


def conjugate_derivative(cost: RunningCost, p: float) -> float:
    """The maximizing control; 0 for every p below the cost slope at 0.

    When the cost is affine on a segment the maximizer is not unique; the
    smallest one is returned (ties broken toward zero volatility).
    """
    if cost.kind == "quadratic":
        return float(max(p, 0.0) / (2.0 * cost.alpha1))
    u_star, _, _ = _maximize(cost, float(p))
    return u_star


def potential(cost: RunningCost, r: float) -> float:
    """Integral of the conjugate from 0 to r (adaptive quadrature if needed)."""
    if cost.kind == "quadratic":
        a1, a2 = cost.alpha1, cost.alpha2
        return float(max(r, 0.0) ** 3 / (12.0 * a1) - a2 * r)
    value, _ = quad(lambda p: conjugate(cost, p), 0.0, float(r), limit=200)
    return float(value)


class ConjugateHamiltonian:
    """Packaged conjugate for the solver: value, derivative, potential.

    All three evaluators are vectorized.  ``derivative_lipschitz`` bounds the
    slope of the derivative (the second derivative of the value, finite by
    the quadratic coercivity of the cost); ``derivative_at_zero`` is the
    control injected at zero curvature, 0 for every cost with a minimum at 0.
    """

    def __init__(self, backend, value_fn, derivative_fn, potential_fn,
                 derivative_lipschitz, derivative_at_zero=0.0, p_range=None,
                 ties_detected=False):
        self.backend = backend
        self._value = value_fn
        self._derivative = derivative_fn
        self._potential = potential_fn
        self.derivative_lipschitz = float(derivative_lipschitz)
        self.derivative_at_zero = float(derivative_at_zero)
        self.p_range = p_range
        self.ties_detected = bool(ties_detected)

    def value(self, p):
        return self._value(np.asarray(p, dtype=float))

    def derivative(self, p):
        return self._derivative(np.asarray(p, dtype=float))

    def potential(self, r):
        return self._potential(np.asarray(r, dtype=float))

    def covers(self, p) -> bool:
        """True when every argument lies inside the tabulated range."""
        if self.p_range is None:
            return True
        p = np.asarray(p, dtype=float)
        return bool(np.all((p >= self.p_range[0]) & (p <= self.p_range[1])))

    @classmethod
    def quadratic(cls, alpha1: float = 1.0, alpha2: float = 0.0):
        a1, a2 = float(alpha1), float(alpha2)

        def value(p):
            return np.maximum(p, 0.0) ** 2 / (4.0 * a1) - a2

        def derivative(p):
            return np.maximum(p, 0.0) / (2.0 * a1)

        def pot(r):
            return np.maximum(r, 0.0) ** 3 / (12.0 * a1) - a2 * r

        return cls("closed-form", value, derivative, pot,
                   derivative_lipschitz=1.0 / (2.0 * a1))

    @classmethod
    def linear(cls):
        """Identity conjugate; turns the flux into plain diffusion (test stub)."""
        return cls("closed-form",
                   lambda p: p + 0.0,
                   lambda p: np.ones_like(p),
                   lambda r: 0.5 * r * r,
                   derivative_lipschitz=0.0,
                   derivative_at_zero=1.0)

    @classmethod
    def zero(cls):
        """Vanishing conjugate; switches the nonlinear flux off (test stub)."""
        return cls("closed-form",
                   lambda p: np.zeros_like(p),
                   lambda p: np.zeros_like(p),
                   lambda r: np.zeros_like(r),
                   derivative_lipschitz=0.0)

    @classmethod
    def tabulate(cls, cost: RunningCost, p_min: float, p_max: float,
                 nodes: int = 4097):
        """Tabulate a callable cost's conjugate on [p_min, p_max].

        Linear interpolation between nodes; beyond the table the derivative
        is extrapolated as a constant (it is globally Lipschitz), so the
        value continues linearly and the potential quadratically.
        """
        if not p_min < p_max:
            raise ValueError("need p_min < p_max")
        grid = np.linspace(float(p_min), float(p_max), int(nodes))
        vals = np.empty_like(grid)
        ders = np.empty_like(grid)
        ties = False
        for i, p in enumerate(grid):
            u, g, tie = _maximize(cost, float(p))
            ders[i] = u
            vals[i] = g
            ties = ties or tie
        # trapezoid integral of the tabulated value, anchored so that the
        # interpolated potential vanishes exactly at 0
        pots = np.concatenate(
            ([0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(grid))))
        pots -= np.interp(0.0, grid, pots)
        lip = float(np.max(np.abs(np.diff(ders) / np.diff(grid))))

        def value(p):
            core = np.interp(p, grid, vals)
            below = p < grid[0]
            above = p > grid[-1]
            core = np.where(below, vals[0] + ders[0] * (p - grid[0]), core)
            core = np.where(above, vals[-1] + ders[-1] * (p - grid[-1]), core)
            return core

        def derivative(p):
            return np.interp(p, grid, ders)

        def pot(r):
            core = np.interp(r, grid, pots)
            below = r < grid[0]
            above = r > grid[-1]
            d0 = r - grid[0]
            d1 = r - grid[-1]
            core = np.where(
                below, pots[0] + vals[0] * d0 + 0.5 * ders[0] * d0 * d0, core)
            core = np.where(
                above, pots[-1] + vals[-1] * d1 + 0.5 * ders[-1] * d1 * d1, core)
            return core

        return cls("tabulated", value, derivative, pot,
                   derivative_lipschitz=lip,
                   derivative_at_zero=float(np.interp(0.0, grid, ders)),
                   p_range=(float(p_min), float(p_max)),
                   ties_detected=ties)

    @classmethod
    def for_cost(cls, cost: RunningCost, p_abs: float = 50.0, nodes: int = 4097):
        """Closed form for the quadratic backend, a table otherwise."""
        if cost.kind == "quadratic":
            return cls.quadratic(cost.alpha1, cost.alpha2)
        return cls.tabulate(cost, -p_abs, p_abs, nodes)
