import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mildhjb.conjugate import (ConjugateHamiltonian, CostValidationError,
                               NonConvexCostError, RunningCost, conjugate,
                               conjugate_derivative, potential)

QUAD = RunningCost.quadratic(1.0, 0.0)

trapezoid = getattr(np, "trapezoid", None) or np.trapz


def brute_sup(cost, p, top=10.0, step=1e-5):
    u = np.arange(0.0, top + step, step)
    gains = p * u - cost.evaluate(u)
    k = int(np.argmax(gains))
    return float(gains[k]), float(u[k])


def test_conjugate_matches_brute_force():
    value, arg = brute_sup(QUAD, 2.0)
    assert value == pytest.approx(1.0, abs=1e-8)
    assert arg == pytest.approx(1.0, abs=1e-4)
    assert conjugate(QUAD, 2.0) == pytest.approx(1.0, abs=1e-12)
    assert conjugate_derivative(QUAD, 2.0) == pytest.approx(1.0, abs=1e-12)


def test_conjugate_negative_and_zero_argument():
    assert conjugate(QUAD, -3.0) == 0.0
    assert conjugate(QUAD, 0.0) == 0.0
    assert conjugate_derivative(QUAD, -5.0) == 0.0


def test_derivative_consistent_with_finite_difference():
    step = 1e-6
    fd = (conjugate(QUAD, 2.0 + step) - conjugate(QUAD, 2.0 - step)) / (2 * step)
    assert fd == pytest.approx(1.0, abs=1e-4)


def test_potential_values():
    # quadrature oracle for the closed form: integral of p^2/4 from 0 to 2
    ps = np.linspace(0.0, 2.0, 20001)
    oracle = float(trapezoid(ps**2 / 4.0, ps))
    assert oracle == pytest.approx(2.0 / 3.0, abs=1e-8)
    assert potential(QUAD, 2.0) == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert potential(QUAD, 0.0) == 0.0
    assert potential(QUAD, -1.0) == 0.0


def test_callable_backend_matches_closed_form():
    cost = RunningCost.from_callable(lambda u: u * u, alpha1=1.0)
    for p in (-2.0, 0.0, 0.7, 2.0, 5.0):
        assert conjugate(cost, p) == pytest.approx(conjugate(QUAD, p), abs=1e-9)
        assert conjugate_derivative(cost, p) == pytest.approx(
            conjugate_derivative(QUAD, p), abs=1e-6)
    assert potential(cost, 2.0) == pytest.approx(2.0 / 3.0, abs=1e-8)


@settings(max_examples=200, deadline=None)
@given(p=st.floats(-40.0, 40.0), u=st.floats(0.0, 20.0))
def test_fenchel_young_inequality(p, u):
    assert p * u <= conjugate(QUAD, p) + float(QUAD.evaluate(u)) + 1e-9


@settings(max_examples=100, deadline=None)
@given(p=st.floats(-40.0, 40.0))
def test_fenchel_young_equality_at_maximizer(p):
    u = conjugate_derivative(QUAD, p)
    gap = conjugate(QUAD, p) + float(QUAD.evaluate(u)) - p * u
    assert abs(gap) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(p1=st.floats(-30.0, 30.0), p2=st.floats(-30.0, 30.0))
def test_monotonicity(p1, p2):
    lo, hi = min(p1, p2), max(p1, p2)
    assert conjugate(QUAD, lo) <= conjugate(QUAD, hi) + 1e-12
    assert conjugate_derivative(QUAD, lo) <= conjugate_derivative(QUAD, hi) + 1e-12


def test_growth_cap():
    cost = RunningCost.quadratic(0.7, 0.3)
    h0 = float(cost.evaluate(0.0))
    for p in np.linspace(-20, 20, 81):
        assert conjugate(cost, p) <= p**2 / (4 * 0.7) + abs(0.3) + abs(h0) + 1e-12


def test_scaling_inequality_for_quadratic():
    # doubling the argument scales the potential by a measured constant c2;
    # the conjugate then satisfies value(v)*v <= (c2 - 1) * potential(v)
    vs = np.linspace(0.05, 8.0, 160)
    ratios = [potential(QUAD, 2 * v) / potential(QUAD, v) for v in vs]
    c2 = max(ratios)
    assert c2 == pytest.approx(8.0, rel=1e-9)
    for v in vs:
        assert conjugate(QUAD, v) * v <= (c2 - 1.0) * potential(QUAD, v) + 1e-9


def test_cost_validation_rejects_bad_parameters():
    with pytest.raises(CostValidationError):
        RunningCost.quadratic(0.0)
    with pytest.raises(CostValidationError):
        RunningCost.quadratic(1.0, -0.5)
    with pytest.raises(CostValidationError):
        RunningCost.from_callable(lambda u: np.sin(3 * u), alpha1=1.0)
    with pytest.raises(CostValidationError):
        # violates the coercivity certificate
        RunningCost.from_callable(lambda u: 0.1 * u * u, alpha1=1.0)


def test_cost_never_evaluated_on_negative_controls():
    with pytest.raises(ValueError):
        QUAD.evaluate(-0.5)


def test_nonconvex_cost_detected_in_bracket():
    # convex on the validation probe window, a dip further out
    dipped = RunningCost.from_callable(
        lambda u: u * u - 6.0 * np.exp(-4.0 * (u - 6.0) ** 2),
        alpha1=0.75, probe_max=2.0)
    with pytest.raises(NonConvexCostError):
        conjugate(dipped, 4.0)


def piecewise_flat_cost():
    # slope 2 on [1, 2]: every u there maximizes the gain at p = 2
    def h(u):
        u = np.asarray(u, dtype=float)
        return np.where(u < 1, u * u,
                        np.where(u <= 2, 2 * u - 1, u * u - 2 * u + 3))

    return RunningCost.from_callable(h, alpha1=0.5)


def test_smallest_maximizer_on_flat_segment():
    cost = piecewise_flat_cost()
    u = conjugate_derivative(cost, 2.0)
    assert u == pytest.approx(1.0, abs=1e-3)


def test_tabulated_backend_flags_ties():
    table = ConjugateHamiltonian.tabulate(piecewise_flat_cost(), -3.0, 3.0,
                                          nodes=7)
    assert table.ties_detected


def test_tabulated_backend_accuracy_and_extrapolation():
    cost = RunningCost.from_callable(lambda u: u * u, alpha1=1.0)
    table = ConjugateHamiltonian.tabulate(cost, -4.0, 4.0, nodes=4097)
    ps = np.linspace(-3.5, 3.5, 57)
    np.testing.assert_allclose(table.value(ps), np.maximum(ps, 0) ** 2 / 4,
                               atol=5e-6)
    np.testing.assert_allclose(table.derivative(ps), np.maximum(ps, 0) / 2,
                               atol=5e-6)
    np.testing.assert_allclose(table.potential(ps),
                               np.maximum(ps, 0) ** 3 / 12, atol=5e-6)
    assert float(table.potential(0.0)) == 0.0
    assert table.derivative_lipschitz == pytest.approx(0.5, abs=1e-3)
    # beyond the table: derivative frozen, value linear, potential quadratic
    assert float(table.derivative(6.0)) == pytest.approx(2.0, abs=1e-5)
    assert float(table.value(6.0)) == pytest.approx(4.0 + 2.0 * 2.0, abs=1e-4)
    assert not table.covers(6.0)
    assert table.covers(np.array([-4.0, 0.0, 4.0]))


def test_potential_is_antiderivative_of_value():
    cost = RunningCost.from_callable(lambda u: u * u + 0.5, alpha1=1.0,
                                     alpha2=0.5)
    table = ConjugateHamiltonian.tabulate(cost, -3.0, 3.0, nodes=4097)
    rs = np.linspace(-2.5, 2.5, 11)
    for r in rs:
        grid = np.linspace(0.0, r, 4001)
        oracle = float(trapezoid(table.value(grid), grid))
        assert float(table.potential(r)) == pytest.approx(oracle, abs=1e-6)


def test_quadratic_conjugate_with_offset():
    cost = RunningCost.quadratic(2.0, 0.5)
    # sup of p*u - 2u^2 - 0.5 at u = p/4
    assert conjugate(cost, 4.0) == pytest.approx(16.0 / 8.0 - 0.5)
    assert conjugate(cost, -1.0) == pytest.approx(-0.5)
    assert conjugate_derivative(cost, 4.0) == pytest.approx(1.0)


def test_tabulated_derivative_is_nonnegative_with_linear_growth_cap():
    cost = RunningCost.from_callable(lambda u: u * u + 0.25 * u, alpha1=1.0)
    table = ConjugateHamiltonian.tabulate(cost, -6.0, 6.0, nodes=513)
    ps = np.linspace(-6.0, 6.0, 513)
    ders = table.derivative(ps)
    assert np.all(ders >= 0.0)
    assert np.all(np.diff(ders) >= -1e-12)
    cap = float(np.max(ders / (np.abs(ps) + 1.0)))
    assert np.isfinite(cap)
    assert np.all(ders <= cap * (np.abs(ps) + 1.0) + 1e-12)
