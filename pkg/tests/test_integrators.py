import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discgrad import (
    BoundEstimates,
    DgMethodConfig,
    DiscreteGradientKind,
    FirstIntegral,
    OdeProblem,
    SkewConfig,
    Stepper,
    dg_step_fixed_point,
    dg_step_linearly_implicit,
    harmonic_oscillator,
    integrate,
    projection_step,
    rk4_classic,
    theoretical_step_bound,
)
from discgrad.errors import (
    DegenerateGradient,
    InvalidParameter,
    NonConvergence,
    StepRejected,
    UnsupportedIntegral,
)
from discgrad.integrators import dg_residual
from discgrad.runge_kutta import implicit_midpoint, rk_step

from oracles import X0, brute_force_dg_step, rigid_integral

DEFAULT = DgMethodConfig()


# -- fixed point ---------------------------------------------------------------


def test_fixed_point_critical_point(rigid):
    out = dg_step_fixed_point(DEFAULT, rigid, np.zeros(3), 0.5)
    assert out.critical and out.iterations == 0
    np.testing.assert_array_equal(out.x_new, np.zeros(3))
    assert math.isnan(out.denom)


def test_fixed_point_zero_step(rigid):
    out = dg_step_fixed_point(DEFAULT, rigid, X0, 0.0)
    np.testing.assert_array_equal(out.x_new, X0)
    assert out.iterations == 1


def test_fixed_point_matches_linear_step(rigid):
    fp = dg_step_fixed_point(DEFAULT, rigid, X0, 0.5)
    lin = dg_step_linearly_implicit(DEFAULT, rigid, X0, 0.5)
    assert abs(rigid_integral(fp.x_new) - rigid_integral(X0)) <= 1e-13
    assert np.linalg.norm(fp.x_new - lin.x_new) <= 10 * DEFAULT.fp_tol
    assert fp.denom == pytest.approx(lin.denom, rel=1e-15)


def test_fixed_point_residual(rigid):
    out = dg_step_fixed_point(DEFAULT, rigid, X0, 0.5)
    assert dg_residual(DEFAULT, rigid, X0, out.x_new, 0.5) <= 10 * DEFAULT.fp_tol * (1 + 1.0)


def test_warm_start_same_answer(rigid):
    cold = dg_step_fixed_point(DEFAULT, rigid, X0, 0.3)
    warm = dg_step_fixed_point(DgMethodConfig(warm_start=True), rigid, X0, 0.3)
    assert np.linalg.norm(cold.x_new - warm.x_new) <= 1e-12
    assert warm.iterations <= cold.iterations


def test_fixed_point_nonconvergence(rigid):
    with pytest.raises(NonConvergence):
        dg_step_fixed_point(DgMethodConfig(fp_max_iter=2), rigid, X0, 0.5)


def test_fixed_point_rejects_large_step(rigid):
    with pytest.raises(StepRejected):
        dg_step_fixed_point(DEFAULT, rigid, X0, 5.0)


def test_fixed_point_with_implicit_tableau(rigid):
    cfg = DgMethodConfig(tableau=implicit_midpoint())
    out = dg_step_fixed_point(cfg, rigid, X0, 0.2)
    assert abs(rigid_integral(out.x_new) - rigid_integral(X0)) <= 1e-14


def test_fixed_point_non_quadratic_integral():
    # pendulum-like system x' = (x2, -sin x1) with I = x2^2/2 - cos x1
    integral = FirstIntegral(lambda x: 0.5 * x[1] ** 2 - math.cos(x[0]),
                             lambda x: np.array([math.sin(x[0]), x[1]]))
    p = OdeProblem(2, lambda x: np.array([x[1], -math.sin(x[0])]), integral, "pendulum")
    ci = DgMethodConfig(skew=SkewConfig(i_breve="discrete_grad",
                                        dg_kind=DiscreteGradientKind.coordinate_increment()))
    traj = integrate(Stepper("dg_fixed_point", ci), p, [1.0, 0.3], 0.1, 20.0)
    assert traj.max_relative_drift() <= 1e-12
    # Gauss quadrature of a non-polynomial gradient is not exact, so only nearly conservative
    mv = DgMethodConfig(skew=SkewConfig(i_breve="discrete_grad",
                                        dg_kind=DiscreteGradientKind.mean_value(4)))
    traj = integrate(Stepper("dg_fixed_point", mv), p, [1.0, 0.3], 0.1, 20.0)
    assert traj.max_relative_drift() <= 1e-8


# -- linearly implicit ---------------------------------------------------------


def test_linear_zero_step(rigid):
    out = dg_step_linearly_implicit(DEFAULT, rigid, X0, 0.0)
    np.testing.assert_array_equal(out.x_new, X0)


def test_linear_harmonic_circle():
    out = dg_step_linearly_implicit(DEFAULT, harmonic_oscillator(), np.array([1.0, 0.0]), 0.1)
    assert out.x_new @ out.x_new == pytest.approx(1.0, abs=1e-15)


def test_linear_rigid_against_brute_force(rigid):
    out = dg_step_linearly_implicit(DEFAULT, rigid, X0, 0.5)
    assert abs(rigid_integral(out.x_new) - rigid_integral(X0)) <= 1e-13
    np.testing.assert_allclose(out.x_new, brute_force_dg_step(X0, 0.5), rtol=0, atol=1e-12)


def test_linear_cost_contract(rigid):
    out = dg_step_linearly_implicit(DEFAULT, rigid, X0, 0.5, diagnostics=True)
    assert out.f_evals == 4
    assert out.i_evals == 2
    assert out.cost.linear_solves == 1
    assert out.iterations == 0 and out.cost.newton_iters == 0 and out.cost.fp_iters == 0
    assert out.cond >= 1.0 and out.denom > 0


def test_linear_critical_point(rigid):
    out = dg_step_linearly_implicit(DEFAULT, rigid, np.zeros(3), 1.0)
    assert out.critical
    np.testing.assert_array_equal(out.x_new, np.zeros(3))


def test_linear_preconditions(rigid):
    non_quadratic = OdeProblem(1, lambda x: 0 * x, FirstIntegral(lambda x: x[0] ** 4,
                                                                 lambda x: 4 * x ** 3), "q")
    with pytest.raises(UnsupportedIntegral):
        dg_step_linearly_implicit(DEFAULT, non_quadratic, [1.0], 0.1)
    bad = [
        DgMethodConfig(skew=SkewConfig(dg_kind=DiscreteGradientKind.mean_value())),
        DgMethodConfig(tableau=implicit_midpoint()),
        DgMethodConfig(skew=SkewConfig(i_breve="discrete_grad")),
    ]
    for cfg in bad:
        with pytest.raises(InvalidParameter):
            dg_step_linearly_implicit(cfg, rigid, X0, 0.1)


def test_linear_at_y_variant_conserves(rigid):
    cfg = DgMethodConfig(skew=SkewConfig(i_tilde="at_y", i_hat="at_x", i_breve="at_y"))
    out = dg_step_linearly_implicit(cfg, rigid, X0, 0.3)
    assert abs(rigid_integral(out.x_new) - rigid_integral(X0)) <= 1e-14


def test_linear_rejects_large_step(rigid):
    with pytest.raises(StepRejected):
        dg_step_linearly_implicit(DEFAULT, rigid, X0, 5.0)


# -- projection ----------------------------------------------------------------


def test_projection_zero_step(rigid):
    out = projection_step(rk4_classic(), rigid, X0, 0.0)
    np.testing.assert_array_equal(out.x_new, X0)
    assert out.iterations == 0


def test_projection_no_correction_needed():
    frozen = OdeProblem(2, lambda x: np.zeros(2), FirstIntegral.quadratic(np.eye(2)), "frozen")
    out = projection_step(rk4_classic(), frozen, np.array([0.6, 0.8]), 0.5)
    assert out.iterations == 0
    np.testing.assert_array_equal(out.x_new, [0.6, 0.8])


def test_projection_conserves_to_tolerance(rigid):
    out = projection_step(rk4_classic(), rigid, X0, 0.5, newton_tol=1e-12)
    I0 = rigid_integral(X0)
    assert abs(rigid_integral(out.x_new) - I0) <= 1e-12 * (1 + I0)
    assert out.iterations >= 1


def test_projection_displacement_order(rigid):
    hs = np.array([0.1, 0.05, 0.025])
    disp = []
    for h in hs:
        y = rk_step(rk4_classic(), rigid, X0, h)
        disp.append(np.linalg.norm(projection_step(rk4_classic(), rigid, X0, h).x_new - y))
    slope = np.polyfit(np.log(hs), np.log(disp), 1)[0]
    assert slope == pytest.approx(5.0, abs=0.5)


def test_projection_degenerate(rigid):
    with pytest.raises(DegenerateGradient):
        projection_step(rk4_classic(), rigid, np.zeros(3), 0.1)


def test_projection_nonconvergence(rigid):
    with pytest.raises(NonConvergence):
        projection_step(rk4_classic(), rigid, X0, 0.5, newton_tol=1e-30, newton_max=3)


def test_projection_counts_integral_evaluations(rigid):
    out = projection_step(rk4_classic(), rigid, X0, 0.5)
    assert out.i_evals == 3 + out.iterations
    assert out.f_evals == 4


# -- integrate -----------------------------------------------------------------


def test_integrate_empty(rigid):
    traj = integrate(Stepper(), rigid, X0, 0.5, 0.0)
    assert traj.n_steps == 0
    np.testing.assert_array_equal(traj.times, [0.0])
    np.testing.assert_array_equal(traj.states[0], X0)
    assert traj.integral_values[0] == rigid_integral(X0)


def test_integrate_invalid(rigid):
    with pytest.raises(InvalidParameter):
        integrate(Stepper(), rigid, X0, 0.0, 1.0)
    with pytest.raises(InvalidParameter):
        Stepper("leapfrog")


def test_integrate_reports_failing_step(rigid):
    with pytest.raises(StepRejected) as info:
        integrate(Stepper(), rigid, X0, 5.0, 50.0)
    assert info.value.step_index == 0
    assert "step 0" in str(info.value)


def test_trajectory_shape(rigid):
    traj = integrate(Stepper(), rigid, X0, 0.5, 10.0)
    assert traj.n_steps == 20
    assert np.all(np.diff(traj.times) > 0)
    np.testing.assert_array_equal(traj.states[0], X0)
    assert traj.cost.steps == 20 and traj.cost.linear_solves == 20
    assert traj.field_gradient_ratio(rigid) > 0


def test_long_run_conservation(rigid):
    traj = integrate(Stepper(), rigid, X0, 0.5, 500.0)
    I0 = rigid_integral(X0)
    assert np.max(traj.drift()) <= 1e-12 * (1 + I0)


def test_rk_drift_dwarfs_dg_drift(conservation_run):
    res, _ = conservation_run
    assert res.drift["rk"][-1] > 1e6 * np.max(res.drift["dg_linear"])


VARIANTS = {
    "dg_linear": Stepper("dg_linear"),
    "dg_fixed_point": Stepper("dg_fixed_point"),
    "dg_fixed_point_mean_value": Stepper("dg_fixed_point", DgMethodConfig(
        skew=SkewConfig("at_x", "at_x", "discrete_grad", DiscreteGradientKind.mean_value(3)))),
    "dg_fixed_point_itoh_abe": Stepper("dg_fixed_point", DgMethodConfig(
        skew=SkewConfig("average", "at_midpoint", "dg_at_y",
                        DiscreteGradientKind.coordinate_increment()))),
    "projection": Stepper("projection"),
}


@pytest.mark.parametrize("name", sorted(VARIANTS))
def test_conservation_over_1000_steps(rigid, name):
    traj = integrate(VARIANTS[name], rigid, X0, 0.1, 100.0)
    assert traj.n_steps == 1000
    I = traj.integral_values
    assert np.max(np.abs(np.diff(I))) / abs(I[0]) <= 1e-12
    assert traj.max_relative_drift() <= 1e-11


def test_ball_ratio_reported(rigid):
    out = dg_step_fixed_point(DEFAULT, rigid, X0, 0.1)
    assert 0 < out.ball_ratio < 1


# -- existence bound -------------------------------------------------------------


def test_bound_formula_example():
    Rp, Hp = theoretical_step_bound(BoundEstimates(L=1, R=1, H=10, C1=1))
    assert Rp == 10.0
    assert Hp == 1 / 72


def test_bound_scales_with_L():
    _, H1 = theoretical_step_bound(BoundEstimates(L=1, R=1, H=1e9, C1=1))
    _, H10 = theoretical_step_bound(BoundEstimates(L=10, R=1, H=1e9, C1=1))
    Rp, _ = theoretical_step_bound(BoundEstimates(L=10, R=1, H=1e9, C1=1))
    assert Rp == 100.0
    assert H10 == pytest.approx(H1 / 10, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(L=st.floats(1, 100), C1=st.floats(0.01, 10), R=st.floats(0.01, 0.5))
def test_bound_homogeneous_in_L(L, C1, R):
    Rp, Hp = theoretical_step_bound(BoundEstimates(L=L, R=R, H=1e12, C1=C1))
    C2 = C1 + 0.2
    assert Rp == 10 * L
    assert Hp == min(1 / (10 * L), 1 / (6 * C2 * Rp), 1 / ((36 * C2 + 6) * L))


def test_bound_large_R():
    prev = math.inf
    for R in (1e2, 1e4, 1e6):
        Rp, Hp = theoretical_step_bound(BoundEstimates(L=1, R=R, H=10, C1=1))
        assert Rp == R
        assert Hp == pytest.approx(1 / (6 * 1.2 * R))
        assert Hp < prev
        prev = Hp


@pytest.mark.parametrize("bad", [dict(L=0), dict(R=-1), dict(H=math.inf), dict(C1=math.nan)])
def test_bound_invalid(bad):
    args = dict(L=1, R=1, H=1, C1=1) | bad
    with pytest.raises(InvalidParameter):
        BoundEstimates(**args)
