"""Step maps and trajectory integration.

Four one-step methods share the :class:`StepOutcome` result type:

* ``dg_fixed_point``: general discrete gradient step, solved by iterating
  ``z <- x + h St(x, z, h) dg(x, z)`` from ``z0 = x``.
* ``dg_linear``: for quadratic integrals with the midpoint discrete gradient and
  an ``x'``-free ``St`` the step equation is linear in ``x'``,
  ``(Id - h/2 St M) x' = (Id + h/2 St M) x + h St b``, and costs one LU solve.
* ``projection``: RK step followed by projection back onto the level set
  along ``i(y)`` with a simplified Newton iteration.
* ``rk``: the plain Runge-Kutta step, which does not conserve I.

Steps never change ``h`` themselves; a :class:`~discgrad.errors.StepRejected`
is surfaced to the caller.
"""

from __future__ import annotations

import math
from functools import partial
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discrete_gradients import MIDPOINT, discrete_gradient
from .errors import (
    DegenerateGradient,
    DiscGradError,
    InvalidParameter,
    NonConvergence,
    UnsupportedIntegral,
)
from .linalg import condition_number, lu_solve
from .problems import (
    CostCounter,
    CriticalPointPolicy,
    OdeProblem,
    eval_field,
    eval_gradient,
    eval_integral,
    eval_integral_and_gradient,
)
from .runge_kutta import STAGE_MAX_ITER, STAGE_TOL, ButcherTableau, f_tilde, rk4_classic
from .skew import SkewConfig, SkewContext

METHODS = ("dg_fixed_point", "dg_linear", "projection", "rk")


@dataclass(frozen=True)
class DgMethodConfig:
    tableau: ButcherTableau = field(default_factory=rk4_classic)
    skew: SkewConfig = field(default_factory=SkewConfig)
    fp_tol: float = 1e-13
    fp_max_iter: int = 200
    critical: CriticalPointPolicy = field(default_factory=CriticalPointPolicy)
    warm_start: bool = False
    stage_tol: float = STAGE_TOL
    stage_max_iter: int = STAGE_MAX_ITER

    def __post_init__(self):
        if not self.fp_tol > 0:
            raise InvalidParameter("fp_tol must be positive")
        if int(self.fp_max_iter) < 1:
            raise InvalidParameter("fp_max_iter must be >= 1")

    @property
    def dg_kind(self):
        return self.skew.dg_kind


@dataclass
class StepOutcome:
    """Result of one step.

    ``denom`` is ``ih . ib`` for discrete gradient steps, ``i(y).i(y)`` for
    projection and NaN where no denominator exists (plain RK, critical points).
    ``ball_ratio`` is ``|x' - x| / |i(x)|``, for checking the uniqueness ball a
    posteriori.
    """

    x_new: np.ndarray
    iterations: int = 0
    denom: float = math.nan
    cond: Optional[float] = None
    cost: CostCounter = field(default_factory=CostCounter)
    ball_ratio: float = math.nan
    critical: bool = False

    @property
    def f_evals(self) -> int:
        return self.cost.f_evals

    @property
    def i_evals(self) -> int:
        return self.cost.i_evals


def _ft(cfg: DgMethodConfig, problem, x, h, cost):
    return f_tilde(cfg.tableau, problem, x, h, cfg.stage_tol, cfg.stage_max_iter, cost)


def _check_h(h):
    if not h >= 0:
        raise InvalidParameter("h must be nonnegative")


def dg_step_fixed_point(cfg: DgMethodConfig, problem: OdeProblem, x, h: float) -> StepOutcome:
    _check_h(h)
    x = np.asarray(x, dtype=float)
    cost = CostCounter(steps=1)
    i_x = eval_gradient(problem, x, cost)
    if cfg.critical.is_critical(x, i_x):
        return StepOutcome(x.copy(), 0, cost=cost, critical=True)

    ft = _ft(cfg, problem, x, h, cost)
    ctx = SkewContext(cfg.skew, problem, ft, x, h, i_x=i_x, cost=cost)
    z = x + h * ft if cfg.warm_start else x.copy()
    tol = cfg.fp_tol * (1.0 + float(np.linalg.norm(x)))
    change = math.inf
    for k in range(1, cfg.fp_max_iter + 1):
        St, denom, dg = ctx.evaluate(z, need_dg=True)
        z_new = x + h * (St @ dg)
        change = float(np.linalg.norm(z_new - z))
        z = z_new
        if change <= tol:
            cost.fp_iters = k
            return StepOutcome(z, k, denom, cost=cost,
                               ball_ratio=float(np.linalg.norm(z - x)) / math.sqrt(ctx.i_x_sq))
    raise NonConvergence(f"discrete gradient fixed point did not converge in {cfg.fp_max_iter} "
                         f"iterations (last change {change:.3e})",
                         residual=change, iterations=cfg.fp_max_iter)


def dg_residual(cfg: DgMethodConfig, problem: OdeProblem, x, xp, h: float) -> float:
    """``|x' - x - h St(x, x', h) dg(x, x')|`` for a candidate ``x'``."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    ft = _ft(cfg, problem, x, h, None)
    ctx = SkewContext(cfg.skew, problem, ft, x, h)
    St, _, dg = ctx.evaluate(xp, need_dg=True)
    return float(np.linalg.norm(xp - x - h * (St @ dg)))


def _check_linear(cfg: DgMethodConfig, problem: OdeProblem):
    if problem.integral.quadratic_form is None:
        raise UnsupportedIntegral("linearly implicit step requires a quadratic first integral")
    if cfg.dg_kind.name != MIDPOINT:
        raise InvalidParameter("linearly implicit step requires the midpoint discrete gradient")
    if not cfg.tableau.explicit:
        raise InvalidParameter("linearly implicit step requires an explicit tableau")
    if not cfg.skew.xprime_free:
        raise InvalidParameter("linearly implicit step requires gradient approximations "
                               "independent of x' (at_x, at_y, dg_at_y)")


def linear_step_matrix(cfg: DgMethodConfig, problem: OdeProblem, x, h: float,
                       cost: CostCounter | None = None, i_x=None):
    """Assemble ``(A, rhs, St, denom)`` of the linearly implicit step at ``x``."""
    _check_linear(cfg, problem)
    q = problem.integral.quadratic_form
    x = np.asarray(x, dtype=float)
    ft = _ft(cfg, problem, x, h, cost)
    ctx = SkewContext(cfg.skew, problem, ft, x, h, i_x=i_x, cost=cost)
    # St does not depend on x' here, so any evaluation point will do
    St, denom, _ = ctx.evaluate(x)
    SM = St @ q.M
    eye = np.eye(x.shape[0])
    A = eye - (0.5 * h) * SM
    rhs = x + (0.5 * h) * (SM @ x) + h * (St @ q.b)
    return A, rhs, St, denom


def dg_step_linearly_implicit(cfg: DgMethodConfig, problem: OdeProblem, x, h: float,
                              diagnostics: bool = False) -> StepOutcome:
    """One linear solve per step; ``diagnostics`` adds the condition number of the matrix."""
    _check_h(h)
    _check_linear(cfg, problem)
    x = np.asarray(x, dtype=float)
    cost = CostCounter(steps=1)
    i_x = eval_gradient(problem, x, cost)
    if cfg.critical.is_critical(x, i_x):
        return StepOutcome(x.copy(), 0, cost=cost, critical=True)

    A, rhs, _, denom = linear_step_matrix(cfg, problem, x, h, cost, i_x)
    x_new = lu_solve(A, rhs)
    cost.linear_solves += 1
    cond = condition_number(A) if diagnostics else None
    return StepOutcome(x_new, 0, denom, cond, cost,
                       ball_ratio=float(np.linalg.norm(x_new - x)) / float(np.linalg.norm(i_x)))


def projection_step(tab: ButcherTableau, problem: OdeProblem, x, h: float,
                    newton_tol: float = 1e-12, newton_max: int = 50,
                    critical: CriticalPointPolicy | None = None,
                    stage_tol: float = STAGE_TOL,
                    stage_max_iter: int = STAGE_MAX_ITER,
                    level: float | None = None) -> StepOutcome:
    """RK step to ``y``, then ``x' = y + lam i(y)`` with ``I(x') = I(x)``.

    ``lam`` follows the simplified Newton iteration
    ``lam <- lam - (I(y + lam i(y)) - I(x)) / (i(y).i(y))`` from ``lam = 0``,
    stopping once the integral residual is at most ``newton_tol * (1 + |I(x)|)``.
    Passing ``level`` projects onto ``{I = level}`` instead of ``{I = I(x)}``;
    :func:`integrate` uses the initial level so Newton residuals do not
    accumulate over a run.
    """
    _check_h(h)
    critical = critical or CriticalPointPolicy()
    x = np.asarray(x, dtype=float)
    cost = CostCounter(steps=1)
    I_x = eval_integral(problem, x, cost) if level is None else float(level)
    y = x + h * f_tilde(tab, problem, x, h, stage_tol, stage_max_iter, cost)
    I_y, i_y = eval_integral_and_gradient(problem, y, cost)
    if critical.is_critical(y, i_y):
        raise DegenerateGradient("projection direction i(y) vanishes")
    g2 = float(i_y @ i_y)
    tol = newton_tol * (1.0 + abs(I_x))
    lam = 0.0
    r = I_y - I_x
    n = 0
    while abs(r) > tol:
        if n >= newton_max:
            raise NonConvergence(f"projection Newton iteration did not converge in {newton_max} "
                                 f"iterations (residual {r:.3e})", residual=abs(r), iterations=n)
        lam -= r / g2
        n += 1
        r = eval_integral(problem, y + lam * i_y, cost) - I_x
    cost.newton_iters = n
    return StepOutcome(y + lam * i_y, n, g2, cost=cost)


def plain_rk_step(tab: ButcherTableau, problem: OdeProblem, x, h: float,
                  stage_tol: float = STAGE_TOL, stage_max_iter: int = STAGE_MAX_ITER) -> StepOutcome:
    _check_h(h)
    x = np.asarray(x, dtype=float)
    cost = CostCounter(steps=1)
    x_new = x + h * f_tilde(tab, problem, x, h, stage_tol, stage_max_iter, cost)
    return StepOutcome(x_new, 0, cost=cost)


@dataclass(frozen=True)
class Stepper:
    """Callable ``(problem, x, h) -> StepOutcome`` bundling a method and its settings."""

    method: str = "dg_linear"
    config: DgMethodConfig = field(default_factory=DgMethodConfig)
    newton_tol: float = 1e-12
    newton_max: int = 50
    diagnostics: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameter(f"unknown method {self.method!r}; choose from {METHODS}")

    def __call__(self, problem: OdeProblem, x, h: float, level: float | None = None) -> StepOutcome:
        cfg = self.config
        if self.method == "dg_linear":
            return dg_step_linearly_implicit(cfg, problem, x, h, self.diagnostics)
        if self.method == "dg_fixed_point":
            return dg_step_fixed_point(cfg, problem, x, h)
        if self.method == "projection":
            return projection_step(cfg.tableau, problem, x, h, self.newton_tol, self.newton_max,
                                   cfg.critical, cfg.stage_tol, cfg.stage_max_iter, level)
        return plain_rk_step(cfg.tableau, problem, x, h, cfg.stage_tol, cfg.stage_max_iter)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    integral_values: np.ndarray
    cost: CostCounter
    iterations: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def drift(self) -> np.ndarray:
        return np.abs(self.integral_values - self.integral_values[0])

    def max_relative_drift(self) -> float:
        I0 = abs(self.integral_values[0])
        return float(self.drift().max()) / (I0 if I0 > 0 else 1.0)

    def field_gradient_ratio(self, problem: OdeProblem) -> float:
        """Largest ``|f(x)| / |i(x)|`` over non-critical nodes (empirical C1)."""
        best = 0.0
        for x in self.states:
            g = np.linalg.norm(problem.integral.gradient(x))
            if g > 0:
                best = max(best, float(np.linalg.norm(problem.field(x)) / g))
        return best


def integrate(stepper, problem: OdeProblem, x0, h: float, t_end: float) -> Trajectory:
    """Apply ``stepper`` ``round(t_end / h)`` times from ``x0``.

    A failing step re-raises its exception with ``step_index`` attached.
    Projection steppers project onto the level set of ``I(x0)``.
    """
    if not h > 0:
        raise InvalidParameter("h must be positive")
    if not t_end >= 0:
        raise InvalidParameter("t_end must be nonnegative")
    n = int(round(t_end / h))
    x = np.asarray(x0, dtype=float).copy()
    states = np.empty((n + 1, x.shape[0]))
    states[0] = x
    iters = np.zeros(n, dtype=int)
    total = CostCounter()
    if isinstance(stepper, Stepper) and stepper.method == "projection":
        step = partial(stepper, level=float(problem.integral.value(x)))
    else:
        step = stepper
    for k in range(n):
        try:
            out = step(problem, x, h)
        except DiscGradError as exc:
            exc.step_index = k
            exc.args = (f"step {k} (t={k * h:.17g}): {exc.args[0] if exc.args else exc}",)
            raise
        x = out.x_new
        states[k + 1] = x
        iters[k] = out.iterations
        total.add(out.cost)
    integral = problem.integral.value
    values = np.array([integral(s) for s in states], dtype=float)
    return Trajectory(np.arange(n + 1) * h, states, values, total, iters)


# -- step-size bound diagnostics ----------------------------------------------


@dataclass(frozen=True)
class BoundEstimates:
    L: float
    R: float
    H: float
    C1: float

    def __post_init__(self):
        for name in ("L", "R", "H", "C1"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidParameter(f"{name} must be positive and finite, got {v!r}")

    @property
    def C2(self) -> float:
        return self.C1 + 0.2


def theoretical_step_bound(est: BoundEstimates):
    """Return ``(R', H')`` of the existence theorem.

    ``R' = max(R, 10 L)`` and
    ``H' = min(H, 1/(10 L), 1/(6 C2 R'), 1/((36 C2 + 6) L))`` with ``C2 = C1 + 1/5``.
    """
    L, C2 = est.L, est.C2
    R_prime = max(est.R, 10.0 * L)
    H_prime = min(est.H, 1.0 / (10.0 * L), 1.0 / (6.0 * C2 * R_prime),
                  1.0 / ((36.0 * C2 + 6.0) * L))
    return R_prime, H_prime


def _ball_sample(rng, x, radius, count):
    d = x.shape[0]
    v = rng.normal(size=(count, d))
    v /= np.linalg.norm(v, axis=1)[:, None]
    r = radius * rng.uniform(size=count) ** (1.0 / d)
    return x + v * r[:, None]


def estimate_bound_constants(problem: OdeProblem, cfg: DgMethodConfig, centers, R: float,
                             H: float, samples: int = 20, rng=None) -> BoundEstimates:
    """Sample difference quotients of ``ft``, ``dg`` and the ``y``-based gradients.

    For every center ``x`` pairs are drawn from ``{|u - x| <= |i(x)| / R}`` and
    ``h`` from ``[0, H)``. The largest quotient is returned as ``L`` and the
    largest ``|f| / |i|`` as ``C1``. These are empirical estimates, not bounds.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    tab, kind = cfg.tableau, cfg.dg_kind
    integral = problem.integral

    def y_of(u, h):
        return u + h * _ft(cfg, problem, u, h, None)

    L = 0.0
    C1 = 0.0
    for x in np.atleast_2d(np.asarray(centers, dtype=float)):
        i_x = eval_gradient(problem, x)
        g = float(np.linalg.norm(i_x))
        if g == 0.0:
            continue
        C1 = max(C1, float(np.linalg.norm(eval_field(problem, x))) / g)
        pts = _ball_sample(rng, x, g / R, 3 * samples)
        for k in range(samples):
            u, v, w = pts[3 * k], pts[3 * k + 1], pts[3 * k + 2]
            h = float(rng.uniform(0.0, H))
            duw = float(np.linalg.norm(u - w))
            dvw = float(np.linalg.norm(v - w))
            if duw == 0.0 or dvw == 0.0:
                continue
            q = [
                np.linalg.norm(f_tilde(tab, problem, u, h) - f_tilde(tab, problem, w, h)) / duw,
                np.linalg.norm(discrete_gradient(kind, integral, u, v)
                               - discrete_gradient(kind, integral, w, v)) / duw,
                np.linalg.norm(discrete_gradient(kind, integral, u, v)
                               - discrete_gradient(kind, integral, u, w)) / dvw,
                np.linalg.norm(eval_gradient(problem, u) - eval_gradient(problem, w)) / duw,
                np.linalg.norm(eval_gradient(problem, y_of(u, h))
                               - eval_gradient(problem, y_of(w, h))) / duw,
                np.linalg.norm(discrete_gradient(kind, integral, u, y_of(u, h))
                               - discrete_gradient(kind, integral, w, y_of(w, h))) / duw,
            ]
            for u_ in (u, v, w):
                gu = float(np.linalg.norm(eval_gradient(problem, u_)))
                if gu > 0:
                    C1 = max(C1, float(np.linalg.norm(eval_field(problem, u_))) / gu)
            if h > 0:
                ft_h = f_tilde(tab, problem, x, h)
                y = x + h * ft_h
                q += [
                    np.linalg.norm(ft_h - eval_field(problem, x)) / (h * g),
                    np.linalg.norm(eval_gradient(problem, y) - i_x) / (h * g),
                    np.linalg.norm(discrete_gradient(kind, integral, x, y) - i_x) / (h * g),
                ]
            L = max(L, float(max(q)))
    if L == 0.0 or C1 == 0.0:
        raise InvalidParameter("no non-critical center to estimate constants from")
    return BoundEstimates(L=L, R=float(R), H=float(H), C1=C1)
