"""ODE problems carrying a conserved first integral.

A problem bundles the vector field ``f``, the first integral ``I`` and its
gradient ``i = grad I``. Quadratic integrals additionally carry the triple
``(M, b, c)`` with ``I(x) = 0.5 x^T M x + b^T x + c``, which the linearly
implicit integrator needs.

All evaluations go through :func:`eval_field` / :func:`eval_integral_and_gradient`
(or the narrower helpers), which validate finiteness and optionally record
their cost in a :class:`CostCounter`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameter, NumericalFault

Array = np.ndarray


@dataclass
class CostCounter:
    """Mutable tally of the work done by a step or a whole run.

    ``i_evals`` counts evaluations of the integral oracle, values and
    gradients separately, so ``eval_integral_and_gradient`` costs two.
    """

    f_evals: int = 0
    i_evals: int = 0
    linear_solves: int = 0
    newton_iters: int = 0
    fp_iters: int = 0
    steps: int = 0

    def add(self, other: "CostCounter") -> None:
        self.f_evals += other.f_evals
        self.i_evals += other.i_evals
        self.linear_solves += other.linear_solves
        self.newton_iters += other.newton_iters
        self.fp_iters += other.fp_iters
        self.steps += other.steps

    def as_dict(self) -> dict:
        return {
            "steps": self.steps,
            "f_evals": self.f_evals,
            "i_evals": self.i_evals,
            "linear_solves": self.linear_solves,
            "newton_iters": self.newton_iters,
            "fp_iters": self.fp_iters,
        }


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    M: Array
    b: Array
    c: float = 0.0

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        b = np.array(self.b, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or b.shape != (M.shape[0],):
            raise InvalidParameter("quadratic form needs square M and matching b")
        if np.max(np.abs(M - M.T), initial=0.0) > 1e-14:
            raise InvalidParameter("M must be symmetric")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    def value(self, x: Array) -> float:
        return float(0.5 * x @ (self.M @ x) + self.b @ x + self.c)

    def gradient(self, x: Array) -> Array:
        return self.M @ x + self.b


@dataclass(frozen=True, eq=False)
class FirstIntegral:
    value: Callable[[Array], float]
    gradient: Callable[[Array], Array]
    quadratic_form: Optional[QuadraticForm] = None

    @classmethod
    def quadratic(cls, M, b=None, c: float = 0.0) -> "FirstIntegral":
        M = np.asarray(M, dtype=float)
        b = np.zeros(M.shape[0]) if b is None else b
        q = QuadraticForm(M, b, c)
        return cls(value=q.value, gradient=q.gradient, quadratic_form=q)

    @property
    def is_quadratic(self) -> bool:
        return self.quadratic_form is not None


@dataclass(frozen=True)
class CriticalPointPolicy:
    """Threshold on |i(x)| below which a step returns x unchanged.

    With ``scale_with_state`` the threshold is ``epsilon_crit * (1 + |x|)``.
    """

    epsilon_crit: float = 1e-14
    scale_with_state: bool = True

    def __post_init__(self):
        if not self.epsilon_crit >= 0.0:
            raise InvalidParameter("epsilon_crit must be nonnegative")

    def threshold(self, x: Array) -> float:
        if self.scale_with_state:
            return self.epsilon_crit * (1.0 + float(np.linalg.norm(x)))
        return self.epsilon_crit

    def is_critical(self, x: Array, i_x: Array) -> bool:
        return float(np.linalg.norm(i_x)) <= self.threshold(x)


@dataclass(frozen=True, eq=False)
class OdeProblem:
    """Autonomous ODE ``x' = f(x)`` with first integral ``integral``.

    ``kernel_factory``, when given, returns a numba-compiled version of the
    field (signature ``float64[:] -> float64[:]``) used by the fine-step
    reference integrator.
    """

    dim: int
    field: Callable[[Array], Array]
    integral: FirstIntegral
    name: str
    params: dict = field(default_factory=dict)
    kernel_factory: Optional[Callable[[], Callable]] = None

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InvalidParameter("dimension must be >= 1")


def _check_state(p: OdeProblem, x) -> Array:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dim,):
        raise InvalidParameter(f"state has shape {x.shape}, expected ({p.dim},)")
    return x


def _finite(v, what: str, x: Array):
    if not np.all(np.isfinite(v)):
        raise NumericalFault(f"non-finite {what} at x={x!r}")
    return v


def eval_field(p: OdeProblem, x, cost: CostCounter | None = None) -> Array:
    x = _check_state(p, x)
    if cost is not None:
        cost.f_evals += 1
    return _finite(np.asarray(p.field(x), dtype=float), "field value", x)


def eval_integral_and_gradient(p: OdeProblem, x, cost: CostCounter | None = None):
    """Return ``(I(x), i(x))``; quadratic integrals use ``Mx + b``."""
    x = _check_state(p, x)
    if cost is not None:
        cost.i_evals += 2
    q = p.integral.quadratic_form
    if q is not None:
        g = q.gradient(x)
        val = float(0.5 * x @ (q.M @ x) + q.b @ x + q.c)
    else:
        g = np.asarray(p.integral.gradient(x), dtype=float)
        val = float(p.integral.value(x))
    _finite(val, "integral value", x)
    return val, _finite(g, "gradient", x)


def eval_gradient(p: OdeProblem, x, cost: CostCounter | None = None) -> Array:
    x = _check_state(p, x)
    if cost is not None:
        cost.i_evals += 1
    q = p.integral.quadratic_form
    g = q.gradient(x) if q is not None else np.asarray(p.integral.gradient(x), dtype=float)
    return _finite(g, "gradient", x)


def eval_integral(p: OdeProblem, x, cost: CostCounter | None = None) -> float:
    x = _check_state(p, x)
    if cost is not None:
        cost.i_evals += 1
    return _finite(float(p.integral.value(x)), "integral value", x)


# -- shipped problems ---------------------------------------------------------


def rigid_body_modified(I1: float = 2.0, I2: float = 1.0, I3: float = 2.0 / 3.0,
                        alpha: float = 1.0) -> OdeProblem:
    """Rigid body with the ``alpha * x1**2`` augmentation.

    ``f(x) = w x v`` with ``w = (x1, x2 - alpha*x1**2, x3)`` and
    ``v = (x1/I1, x2/I2, x3/I3) = i(x)``, so ``i . f = 0`` identically.
    For ``alpha = 0`` this is the classical free rigid body, which also
    conserves ``|x|**2``.
    """
    for name, val in (("I1", I1), ("I2", I2), ("I3", I3)):
        if val == 0 or not math.isfinite(val):
            raise InvalidParameter(f"moment of inertia {name} must be finite and nonzero")
    I1, I2, I3, alpha = float(I1), float(I2), float(I3), float(alpha)
    a1, a2, a3 = 1.0 / I1, 1.0 / I2, 1.0 / I3

    def field(x):
        x1, x2, x3 = x
        v1, v2, v3 = a1 * x1, a2 * x2, a3 * x3
        w2 = x2 - alpha * x1 * x1
        return np.array([w2 * v3 - x3 * v2, x3 * v1 - x1 * v3, x1 * v2 - w2 * v1])

    def kernel_factory():
        import numba

        @numba.njit(cache=False)
        def kernel(x):
            x1 = x[0]
            x2 = x[1]
            x3 = x[2]
            v1 = a1 * x1
            v2 = a2 * x2
            v3 = a3 * x3
            w2 = x2 - alpha * x1 * x1
            out = np.empty(3)
            out[0] = w2 * v3 - x3 * v2
            out[1] = x3 * v1 - x1 * v3
            out[2] = x1 * v2 - w2 * v1
            return out

        return kernel

    integral = FirstIntegral.quadratic(np.diag([a1, a2, a3]))
    return OdeProblem(
        dim=3,
        field=field,
        integral=integral,
        name="rigid_body_modified",
        params={"I1": I1, "I2": I2, "I3": I3, "alpha": alpha},
        kernel_factory=kernel_factory,
    )


def harmonic_oscillator(omega: float = 1.0) -> OdeProblem:
    """``x' = omega * (-x2, x1)`` with ``I = |x|^2 / 2``; exact solution is a rotation."""
    omega = float(omega)
    if not math.isfinite(omega):
        raise InvalidParameter("omega must be finite")

    def field(x):
        return np.array([-omega * x[1], omega * x[0]])

    def kernel_factory():
        import numba

        @numba.njit(cache=False)
        def kernel(x):
            out = np.empty(2)
            out[0] = -omega * x[1]
            out[1] = omega * x[0]
            return out

        return kernel

    return OdeProblem(
        dim=2,
        field=field,
        integral=FirstIntegral.quadratic(np.eye(2)),
        name="harmonic_oscillator",
        params={"omega": omega},
        kernel_factory=kernel_factory,
    )


def harmonic_exact(x0, t: float, omega: float = 1.0) -> Array:
    c, s = math.cos(omega * t), math.sin(omega * t)
    x0 = np.asarray(x0, dtype=float)
    return np.array([c * x0[0] - s * x0[1], s * x0[0] + c * x0[1]])


PROBLEMS: dict[str, Callable[..., OdeProblem]] = {
    "rigid_body_modified": rigid_body_modified,
    "harmonic_oscillator": harmonic_oscillator,
}

DEFAULT_X0 = {
    "rigid_body_modified": lambda: np.array([math.cos(1.1), 0.0, math.sin(1.1)]),
    "harmonic_oscillator": lambda: np.array([1.0, 0.0]),
}


def make_problem(name: str, **params) -> OdeProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise InvalidParameter(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**params)


def orthogonality_residual(p: OdeProblem, x) -> float:
    """``|i(x).f(x)|``, which vanishes for an exact first integral."""
    f = eval_field(p, x)
    g = eval_gradient(p, x)
    return abs(float(g @ f))
