import numpy as np
import pytest

from mildhjb.conjugate import ConjugateHamiltonian, RunningCost
from mildhjb.drift import DriftData
from mildhjb.grid import Grid1D
from mildhjb.problem import ControlProblem
from mildhjb.resolvent import EllipticOperands
from mildhjb.stepper import TransformedProblem


def tanh_drift(grid: Grid1D, scale: float = 1.0) -> DriftData:
    return DriftData.from_callables(
        grid,
        lambda x: scale * np.tanh(x),
        lambda x: scale / np.cosh(x) ** 2,
        lambda x: -2.0 * scale * np.tanh(x) / np.cosh(x) ** 2)


def desk_problem(horizon: float = 0.5) -> ControlProblem:
    """Reference smooth problem: tanh drift, wavy volatility, Gaussian costs."""
    return ControlProblem(
        f=np.tanh,
        f_x=lambda x: 1.0 / np.cosh(x) ** 2,
        f_xx=lambda x: -2.0 * np.tanh(x) / np.cosh(x) ** 2,
        sigma=lambda x: np.sqrt(2.0) + 0.1 * np.sin(x),
        sigma_x=lambda x: 0.1 * np.cos(x),
        sigma_xx=lambda x: -0.1 * np.sin(x),
        g=lambda x: np.exp(-x * x),
        g_xx=lambda x: (4.0 * x * x - 2.0) * np.exp(-x * x),
        g0=lambda x: np.exp(-x * x),
        g0_xx=lambda x: (4.0 * x * x - 2.0) * np.exp(-x * x),
        cost=RunningCost.quadratic(1.0, 0.0),
        horizon=horizon)


def heat_problem(grid: Grid1D, width: float = 0.5,
                 horizon: float = 0.25) -> TransformedProblem:
    """Identity conjugate, unit multiplier, no drift: plain diffusion."""
    ops = EllipticOperands.build(grid, ConjugateHamiltonian.linear(),
                                 np.sqrt(2.0))
    y0 = np.exp(-grid.x**2 / (2.0 * width**2)) / np.sqrt(2 * np.pi * width**2)
    return TransformedProblem(ops, y0, np.zeros(grid.n), horizon)


def heat_exact(grid: Grid1D, width: float, t: float) -> np.ndarray:
    s2 = width**2 + 2.0 * t
    return np.exp(-grid.x**2 / (2.0 * s2)) / np.sqrt(2 * np.pi * s2)


@pytest.fixture
def grid201() -> Grid1D:
    return Grid1D(10.0, 201)
