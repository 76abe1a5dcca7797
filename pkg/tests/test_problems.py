import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from discgrad import (
    CostCounter,
    CriticalPointPolicy,
    FirstIntegral,
    InvalidParameter,
    NumericalFault,
    OdeProblem,
    eval_field,
    eval_integral_and_gradient,
    harmonic_oscillator,
    make_problem,
    rigid_body_modified,
)
from discgrad.problems import eval_gradient, harmonic_exact, orthogonality_residual

from oracles import F_X0, GRAD_X0, I_X0, X0, rigid_field, rigid_gradient, rigid_integral

box3 = arrays(np.float64, 3, elements=st.floats(-2, 2))
moments = st.floats(0.1, 5.0)


def test_origin_is_rest_point(rigid):
    z = np.zeros(3)
    assert np.array_equal(eval_field(rigid, z), z)
    I, g = eval_integral_and_gradient(rigid, z)
    assert I == 0.0 and np.array_equal(g, z)


def test_values_at_x0(rigid):
    f = eval_field(rigid, X0)
    np.testing.assert_allclose(f, F_X0, atol=2e-6)
    np.testing.assert_allclose(f, rigid_field(X0), rtol=0, atol=1e-15)
    I, g = eval_integral_and_gradient(rigid, X0)
    assert I == pytest.approx(I_X0, abs=1e-7)
    assert I == pytest.approx(rigid_integral(X0), rel=1e-15)
    np.testing.assert_allclose(g, GRAD_X0, atol=1e-7)
    assert abs(g @ f) <= 1e-15


def test_harmonic_field():
    p = harmonic_oscillator()
    np.testing.assert_array_equal(eval_field(p, [1.0, 0.0]), [0.0, 1.0])


def test_half_norm_squared_integral():
    p = OdeProblem(2, lambda x: np.array([-x[1], x[0]]), FirstIntegral.quadratic(np.eye(2)), "ho")
    I, g = eval_integral_and_gradient(p, [3.0, 4.0])
    assert I == 12.5
    np.testing.assert_array_equal(g, [3.0, 4.0])


def test_quadratic_at_zero_returns_constant():
    integral = FirstIntegral.quadratic(np.diag([1.0, 2.0]), c=0.75)
    p = OdeProblem(2, lambda x: np.zeros(2), integral, "const")
    I, g = eval_integral_and_gradient(p, np.zeros(2))
    assert I == 0.75 and np.array_equal(g, np.zeros(2))


@pytest.mark.parametrize("bad", [dict(I1=0.0), dict(I2=0.0), dict(I3=0.0), dict(I1=math.inf)])
def test_zero_moment_rejected(bad):
    with pytest.raises(InvalidParameter):
        rigid_body_modified(**bad)


def test_dimension_mismatch(rigid):
    with pytest.raises(InvalidParameter):
        eval_field(rigid, np.zeros(2))


def test_non_finite_output_fails_fast():
    p = OdeProblem(1, lambda x: np.array([np.nan]), FirstIntegral.quadratic([[1.0]]), "nan")
    with pytest.raises(NumericalFault):
        eval_field(p, [1.0])
    q = OdeProblem(1, lambda x: x, FirstIntegral(lambda x: math.inf, lambda x: x), "inf")
    with pytest.raises(NumericalFault):
        eval_integral_and_gradient(q, [1.0])


def test_asymmetric_form_rejected():
    with pytest.raises(InvalidParameter):
        FirstIntegral.quadratic([[1.0, 1.0], [0.0, 1.0]])


def test_cost_counter_counts_values_and_gradients():
    c = CostCounter()
    p = rigid_body_modified()
    eval_field(p, X0, c)
    eval_integral_and_gradient(p, X0, c)
    eval_gradient(p, X0, c)
    assert (c.f_evals, c.i_evals) == (1, 3)


def test_critical_policy():
    pol = CriticalPointPolicy()
    assert pol.threshold(np.zeros(3)) == 1e-14
    assert pol.is_critical(np.zeros(3), np.zeros(3))
    assert not pol.is_critical(X0, rigid_gradient(X0))
    with pytest.raises(InvalidParameter):
        CriticalPointPolicy(-1.0)


def test_make_problem_by_name():
    assert make_problem("rigid_body_modified", I1=3.0).params["I1"] == 3.0
    with pytest.raises(InvalidParameter):
        make_problem("pendulum")


def test_harmonic_exact_is_rotation():
    np.testing.assert_allclose(harmonic_exact([1.0, 0.0], 1.0), [math.cos(1), math.sin(1)])


@settings(max_examples=100, deadline=None)
@given(x=box3, I1=moments, I2=moments, I3=moments, alpha=st.floats(-3, 3))
def test_orthogonality(x, I1, I2, I3, alpha):
    p = rigid_body_modified(I1, I2, I3, alpha)
    f = eval_field(p, x)
    g = eval_gradient(p, x)
    assert orthogonality_residual(p, x) <= 1e-12 * (1 + np.linalg.norm(f) * np.linalg.norm(g))


@settings(max_examples=100, deadline=None)
@given(x=arrays(np.float64, 2, elements=st.floats(-2, 2)), omega=st.floats(-3, 3))
def test_harmonic_orthogonality(x, omega):
    p = harmonic_oscillator(omega)
    f = eval_field(p, x)
    assert orthogonality_residual(p, x) <= 1e-12 * (1 + np.linalg.norm(f) * np.linalg.norm(x))


@settings(max_examples=100, deadline=None)
@given(x=box3, I1=moments, I2=moments, I3=moments)
def test_quadratic_gradient_consistency(x, I1, I2, I3):
    p = rigid_body_modified(I1, I2, I3)
    q = p.integral.quadratic_form
    g = np.asarray(p.integral.gradient(x))
    assert np.linalg.norm(g - (q.M @ x + q.b)) <= 1e-13 * (1 + np.linalg.norm(x))
    np.testing.assert_allclose(g, rigid_gradient(x, (I1, I2, I3)), rtol=1e-15)


@settings(max_examples=100, deadline=None)
@given(x=box3)
def test_classical_body_conserves_norm(x):
    p = rigid_body_modified(2.0, 1.0, 2.0 / 3.0, 0.0)
    f = eval_field(p, x)
    scale = 1 + np.linalg.norm(x) * np.linalg.norm(f)
    assert abs(x @ f) <= 1e-14 * scale
    assert abs(rigid_gradient(x) @ f) <= 1e-14 * scale


@settings(max_examples=100, deadline=None)
@given(x=box3)
def test_alpha_terms_separate(x):
    a1, _, a3 = 1 / 2.0, 1.0, 1.5
    f0 = eval_field(rigid_body_modified(alpha=0.0), x)
    f1 = eval_field(rigid_body_modified(alpha=1.0), x)
    extra = np.array([-x[0] ** 2 * a3 * x[2], 0.0, x[0] ** 2 * a1 * x[0]])
    np.testing.assert_allclose(f1, f0 + extra, rtol=0, atol=1e-15 * (1 + np.sum(x ** 2) ** 1.5))
