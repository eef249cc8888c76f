"""Tabulated drift coefficient and the bounded nonlocal perturbation.

Differentiating the transport term of the backward equation twice in space
(the forward unknown is minus the value curvature at reversed time) leaves
the lower-order coupling

    perturbation(y) = f'' * gradient(green(y)) - 2 f' * y,

where the Green solve inverts minus the second derivative, so
``gradient(green(y))`` is exactly the value slope the chain rule produces.
The perturbation is bounded on L1 with constant
``||f''||_1 * c_gradient + 2 ||f'||_inf``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid1D, diff1_central, green_constants, poisson_gradient

__all__ = ["DriftData", "apply_B"]


@dataclass(frozen=True)
class DriftData:
    """Drift f with its first two derivatives tabulated on the grid."""

    grid: Grid1D
    f: np.ndarray
    f1: np.ndarray
    f2: np.ndarray

    def __post_init__(self):
        for name in ("f", "f1", "f2"):
            table = getattr(self, name)
            if table.shape != (self.grid.n,):
                raise ValueError(f"{name} table has shape {table.shape}, "
                                 f"expected ({self.grid.n},)")
            if not np.all(np.isfinite(table)):
                raise ValueError(f"{name} table contains non-finite entries")

    @classmethod
    def from_callables(cls, grid: Grid1D, f, f1=None, f2=None) -> "DriftData":
        """Tabulate f; derivatives fall back to central differences of f."""
        x = grid.x
        fv = np.asarray(f(x), dtype=float) + np.zeros_like(x)
        f1v = (np.asarray(f1(x), dtype=float) + np.zeros_like(x)
               if f1 is not None else diff1_central(grid, fv))
        f2v = (np.asarray(f2(x), dtype=float) + np.zeros_like(x)
               if f2 is not None else diff1_central(grid, f1v))
        return cls(grid, fv, f1v, f2v)

    @property
    def slope_sup(self) -> float:
        """sup |f'| on the grid, the quasi-accretivity shift of the operator."""
        return float(np.max(np.abs(self.f1)))

    @property
    def curvature_l1(self) -> float:
        """Discrete L1 norm of f''."""
        return self.grid.norm1(self.f2)

    def perturbation_bound(self) -> float:
        """Measured L1 operator bound of the nonlocal perturbation."""
        _, c_grad = green_constants(self.grid)
        return self.curvature_l1 * c_grad + 2.0 * self.slope_sup


def apply_B(drift: DriftData, y) -> np.ndarray:
    """f'' * (green(y))' - 2 f' * y, nodewise."""
    return (drift.f2 * poisson_gradient(drift.grid, y)
            - 2.0 * drift.f1 * np.asarray(y, dtype=float))
