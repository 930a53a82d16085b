"""Reaction-term catalogue, dispersion relation, and container invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kppcascade.core import (
    FieldStack,
    Grid1D,
    dispersion,
    eval_nonlinearity,
    heaviside_stack,
    mckean,
    polynomial,
    quadratic,
    validate_kpp,
)
from kppcascade.errors import InvalidInputError, SubcriticalSpeedError


# ---------------------------------------------------------------- evaluation

def test_quadratic_midpoint():
    assert eval_nonlinearity(quadratic(), 0.5) == 0.25


def test_quadratic_boundary_zero():
    assert eval_nonlinearity(quadratic(), 0.0) == 0.0
    assert eval_nonlinearity(quadratic(), 1.0) == 0.0


def test_mckean_binary_matches_hand_evaluation():
    # Independent oracle: beta (1-u) - beta p2 (1-u)^2 evaluated literally.
    beta, u = 1.0, 0.5
    expected = beta * (1.0 - u) - beta * (1.0 - u) ** 2
    assert expected == 0.25  # the arithmetic, spelled out
    f = mckean(beta=beta, offspring=(0.0, 1.0))
    assert eval_nonlinearity(f, u) == pytest.approx(expected, abs=1e-15)


def test_mckean_binary_equals_scaled_logistic():
    # beta(1-u) - beta(1-u)^2 = beta u (1-u), so mckean(beta, binary) is
    # beta times the quadratic term everywhere.
    f = mckean(beta=1.7, offspring=(0.0, 1.0))
    u = np.linspace(0.0, 1.0, 41)
    np.testing.assert_allclose(
        eval_nonlinearity(f, u), 1.7 * u * (1.0 - u), atol=1e-14
    )


def test_eval_vectorizes_and_preserves_shape():
    u = np.linspace(0.0, 1.0, 7)
    out = eval_nonlinearity(quadratic(), u)
    assert out.shape == u.shape
    np.testing.assert_allclose(out, u - u * u)


def test_eval_clamps_with_warning():
    with pytest.warns(RuntimeWarning):
        val = eval_nonlinearity(quadratic(), 1.2)
    assert val == 0.0  # clamped to u = 1


def test_eval_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        eval_nonlinearity(quadratic(), float("nan"))


# ---------------------------------------------------------------- validation

def test_quadratic_passes_all_conditions():
    report = validate_kpp(quadratic(), n_samples=101)
    assert report.passed
    assert report.failures == ()


def test_cubic_passes_all_conditions():
    # f(u) = u - u^3: f(1) = 0, f'(1) = -2 < 0, f(u) = u(1-u^2) <= u.
    report = validate_kpp(polynomial((0.0, 1.0, 0.0, -1.0)))
    assert report.passed


def test_steep_polynomial_fails_slope_condition():
    # f(u) = 2u(1-u)(u+0.1) = 0.2u + 1.8u^2 - 2u^3.  At u = 0.5 it takes
    # the value 0.3 while f'(0) u = 0.2 * 0.5 = 0.1, so f <= f'(0) u fails.
    f = polynomial((0.0, 0.2, 1.8, -2.0))
    assert eval_nonlinearity(f, 0.5) == pytest.approx(0.3, abs=1e-15)
    report = validate_kpp(f)
    assert not report.passed
    assert report.failures == ("f(u) <= f'(0) u on (0,1)",)


def test_validate_requires_enough_samples():
    with pytest.raises(InvalidInputError):
        validate_kpp(quadratic(), n_samples=5)


def test_constructor_rejects_nonvanishing_endpoints():
    with pytest.raises(InvalidInputError):
        polynomial((0.1, 1.0, -1.0))  # f(0) = 0.1
    with pytest.raises(InvalidInputError):
        polynomial((0.0, 1.0, -0.5))  # f(1) = 0.5


def test_mckean_rejects_bad_offspring_law():
    with pytest.raises(InvalidInputError):
        mckean(beta=1.0, offspring=(0.3, 0.3))  # does not sum to 1
    with pytest.raises(InvalidInputError):
        mckean(beta=-1.0, offspring=(0.0, 1.0))


@given(u=st.floats(min_value=0.0, max_value=1.0))
def test_quadratic_symmetry(u):
    f = quadratic()
    assert math.isclose(
        eval_nonlinearity(f, u), eval_nonlinearity(f, 1.0 - u),
        rel_tol=0.0, abs_tol=1e-15,
    )


# ---------------------------------------------------------------- dispersion

def test_minimal_speed_for_unit_slope():
    d = dispersion(quadratic())
    assert d.cstar == 2.0
    assert d.lambdastar == 1.0
    assert d.lambda_c is None


def test_decay_rate_at_minimal_speed_is_double_root():
    d = dispersion(quadratic(), c=2.0)
    assert d.lambda_c == pytest.approx(1.0, abs=1e-15)


def test_decay_rate_at_speed_2p5():
    # (2.5 - sqrt(6.25 - 4)) / 2 = (2.5 - 1.5) / 2 = 0.5, exactly.
    d = dispersion(quadratic(), c=2.5)
    assert d.lambda_c == pytest.approx(0.5, abs=1e-15)


def test_subcritical_speed_rejected():
    with pytest.raises(SubcriticalSpeedError):
        dispersion(quadratic(), c=1.9)


@settings(max_examples=200)
@given(
    fprime0=st.floats(min_value=0.1, max_value=2.0),
    ratio=st.floats(min_value=1.0, max_value=3.0),
)
def test_dispersion_identity(fprime0, ratio):
    # c lambda_c = lambda_c^2 + f'(0) must hold to 1e-12 for any
    # admissible speed.
    f = polynomial((0.0, fprime0, -fprime0))  # fprime0 * (u - u^2)
    c = ratio * 2.0 * math.sqrt(fprime0)
    d = dispersion(f, c=c)
    assert abs(c * d.lambda_c - (d.lambda_c ** 2 + fprime0)) <= 1e-12
    assert 0.0 < d.lambda_c <= d.lambdastar + 1e-15


# ---------------------------------------------------------------- containers

def test_grid_coordinates():
    g = Grid1D(-1.0, 0.5, 5)
    np.testing.assert_allclose(g.x, [-1.0, -0.5, 0.0, 0.5, 1.0])
    assert g.x_last == 1.0


def test_grid_rejects_bad_spacing():
    with pytest.raises(InvalidInputError):
        Grid1D(0.0, -0.1, 10)
    with pytest.raises(InvalidInputError):
        Grid1D(0.0, 0.1, 2)


def test_field_stack_shape_checked():
    g = Grid1D(0.0, 1.0, 4)
    with pytest.raises(InvalidInputError):
        FieldStack(g, np.zeros((2, 5)))


def test_field_stack_component_is_one_based():
    g = Grid1D(0.0, 1.0, 4)
    stack = FieldStack(g, np.array([[0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]]))
    assert stack.k == 2
    np.testing.assert_array_equal(stack.component(2), np.ones(4))
    with pytest.raises(InvalidInputError):
        stack.component(0)


def test_range_violation_measures_overshoot():
    g = Grid1D(0.0, 1.0, 3)
    stack = FieldStack(g, np.array([[-0.25, 0.5, 1.1]]))
    assert stack.range_violation() == pytest.approx(0.25)


def test_heaviside_stack_is_left_saturated():
    g = Grid1D(-2.0, 1.0, 5)
    stack = heaviside_stack(g, k=3)
    assert stack.k == 3
    np.testing.assert_array_equal(stack.values[0], [1.0, 1.0, 1.0, 0.0, 0.0])
    assert stack.range_violation() == 0.0
