"""Discrete gradient integrators that conserve a first integral."""

from .discrete_gradients import DiscreteGradientKind, discrete_gradient, verify_dg_identity
from .errors import (
    DegenerateGradient,
    DiscGradError,
    InvalidParameter,
    NonConvergence,
    NumericalFault,
    ReferenceUnresolved,
    SingularStep,
    StepRejected,
    UnsupportedIntegral,
)
from .integrators import (
    BoundEstimates,
    DgMethodConfig,
    Stepper,
    StepOutcome,
    Trajectory,
    dg_step_fixed_point,
    dg_step_linearly_implicit,
    estimate_bound_constants,
    integrate,
    projection_step,
    theoretical_step_bound,
)
from .linalg import condition_number, lu_solve
from .problems import (
    CostCounter,
    CriticalPointPolicy,
    FirstIntegral,
    OdeProblem,
    eval_field,
    eval_integral_and_gradient,
    harmonic_oscillator,
    make_problem,
    rigid_body_modified,
)
from .runge_kutta import ButcherTableau, f_tilde, rk4_classic, rk_stages, rk_step
from .skew import GradientApproxChoice, SkewConfig, default_skew, discrete_skew

__version__ = "0.1.0"
