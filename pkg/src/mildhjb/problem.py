"""User-facing control problem and its reduction to grid data.

A ``ControlProblem`` holds the continuous coefficients (vectorized callables
of the state) and the horizon.  ``discretize`` builds the transformed
initial state and forcing, minus the second derivatives of the terminal and
running state costs, tabulating analytic derivatives when supplied and
falling back to central differences of the sampled tables otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .conjugate import ConjugateHamiltonian, RunningCost
from .degenerate import VolatilityData
from .drift import DriftData
from .grid import Grid1D, diff1_central
from .resolvent import EllipticOperands
from .stepper import TransformedProblem

__all__ = ["ControlProblem"]


def _table(fn, x):
    return np.asarray(fn(x), dtype=float) + np.zeros_like(x)


@dataclass(frozen=True)
class ControlProblem:
    """Coefficients (f, sigma), costs (g, g0, running cost), and horizon.

    Optional analytic derivatives sharpen the grid data; any that are
    missing are replaced by central differences of the sampled tables.
    ``f=None`` means zero drift.
    """

    sigma: Callable
    g: Callable
    g0: Callable
    cost: RunningCost
    horizon: float
    f: Optional[Callable] = None
    f_x: Optional[Callable] = None
    f_xx: Optional[Callable] = None
    g_xx: Optional[Callable] = None
    g0_xx: Optional[Callable] = None
    sigma_x: Optional[Callable] = None
    sigma_xx: Optional[Callable] = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    def drift_data(self, grid: Grid1D) -> Optional[DriftData]:
        if self.f is None:
            return None
        return DriftData.from_callables(grid, self.f, self.f_x, self.f_xx)

    def volatility_data(self, grid: Grid1D) -> VolatilityData:
        return VolatilityData.from_callables(grid, self.sigma, self.sigma_x,
                                             self.sigma_xx)

    def transformed_data(self, grid: Grid1D) -> tuple[np.ndarray, np.ndarray]:
        """(initial, source) = (-g0'', -g'') tabulated on the grid."""
        x = grid.x
        if self.g0_xx is not None:
            initial = -_table(self.g0_xx, x)
        else:
            initial = -diff1_central(grid, diff1_central(grid, _table(self.g0, x)))
        if self.g_xx is not None:
            source = -_table(self.g_xx, x)
        else:
            source = -diff1_central(grid, diff1_central(grid, _table(self.g, x)))
        return initial, source

    def conjugate(self, grid: Grid1D) -> ConjugateHamiltonian:
        """Closed form when quadratic, otherwise a table sized to the data."""
        if self.cost.kind == "quadratic":
            return ConjugateHamiltonian.quadratic(self.cost.alpha1,
                                                  self.cost.alpha2)
        initial, _ = self.transformed_data(grid)
        smax2 = float(np.max(_table(self.sigma, grid.x) ** 2))
        p_abs = max(1.0, 4.0 * smax2 * float(np.max(np.abs(initial))))
        return ConjugateHamiltonian.tabulate(self.cost, -p_abs, p_abs)

    def discretize(self, grid: Grid1D,
                   conj: Optional[ConjugateHamiltonian] = None,
                   use_perturbation: bool = True) -> TransformedProblem:
        """Assemble the transformed Cauchy problem on one grid."""
        conj = conj if conj is not None else self.conjugate(grid)
        ops = EllipticOperands.build(
            grid, conj, self.sigma, drift=self.drift_data(grid),
            use_perturbation=use_perturbation)
        initial, source = self.transformed_data(grid)
        return TransformedProblem(ops, initial, source, self.horizon)
