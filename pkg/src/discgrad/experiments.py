"""Rigid-body studies: conservation, order, efficiency, step-size criterion, phase portraits.

Every study takes an :class:`ExperimentConfig` and returns plain result
objects. :mod:`discgrad.cli` writes them to CSV. "Exact" solutions are
fine-step RK4 references checked by step halving (see :func:`reference_solution`).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import DiscGradError, InvalidParameter, ReferenceUnresolved, StepRejected
from .integrators import DgMethodConfig, Stepper, integrate, linear_step_matrix
from .linalg import condition_number, lu_solve
from .problems import DEFAULT_X0, OdeProblem, eval_gradient, make_problem
from .runge_kutta import rk4_classic, rk_step
from .skew import SkewConfig

# -- fine-step reference ------------------------------------------------------


@lru_cache(maxsize=None)
def _rk4_kernels():
    import numba

    @numba.njit
    def run(f, x, h, n, every):
        n_rec = n // every if every > 0 else 0
        rec = np.empty((n_rec + 1, x.shape[0]))
        rec[0] = x
        j = 1
        for k in range(n):
            k1 = f(x)
            k2 = f(x + (0.5 * h) * k1)
            k3 = f(x + (0.5 * h) * k2)
            k4 = f(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if every > 0 and (k + 1) % every == 0:
                rec[j] = x
                j += 1
        return x, rec

    return run


_compiled_fields: dict = {}


def _kernel(problem: OdeProblem):
    if problem.kernel_factory is None:
        return None
    key = id(problem)
    if key not in _compiled_fields:
        _compiled_fields[key] = (problem, problem.kernel_factory())
    return _compiled_fields[key][1]


def _rk4_run(problem: OdeProblem, x0, h: float, n: int, every: int = 0):
    """``n`` RK4 steps of size ``h``; states every ``every`` steps when ``every > 0``."""
    x0 = np.asarray(x0, dtype=float)
    kernel = _kernel(problem)
    if kernel is not None:
        return _rk4_kernels()(kernel, x0.copy(), float(h), int(n), int(every))
    tab = rk4_classic()
    rec = [x0] if every > 0 else []
    x = x0
    for k in range(n):
        x = rk_step(tab, problem, x, h)
        if every > 0 and (k + 1) % every == 0:
            rec.append(x)
    return x, np.array(rec) if rec else np.empty((0, x0.shape[0]))


def _verified(problem, x0, h_fine, n_coarse, substeps, rel_tol, max_refinements):
    x_a, rec_a = _rk4_run(problem, x0, h_fine, n_coarse * substeps, substeps)
    scale = max(float(np.linalg.norm(x0)), 0.0)
    for _ in range(max_refinements + 1):
        substeps *= 2
        h_fine *= 0.5
        x_b, rec_b = _rk4_run(problem, x0, h_fine, n_coarse * substeps, substeps)
        diff = float(np.linalg.norm(x_b - x_a))
        if diff <= rel_tol * max(float(np.linalg.norm(x_b)), scale):
            return x_b, rec_b, h_fine
        x_a, rec_a = x_b, rec_b
    raise ReferenceUnresolved(
        f"halving the reference step still changes the result by {diff:.3e} "
        f"(relative tolerance {rel_tol:g}) after {max_refinements} refinements"
    )


def reference_solution(problem: OdeProblem, x0, t_end: float, h_ref: float,
                       rel_tol: float = 1e-11, max_refinements: int = 3) -> np.ndarray:
    """RK4 solution at ``t_end`` with step about ``h_ref``, verified by step halving.

    The result is accepted once halving the step changes the final state by at
    most ``rel_tol`` relative; otherwise the step is halved again, up to
    ``max_refinements`` times, before :class:`ReferenceUnresolved` is raised.
    """
    x0 = np.asarray(x0, dtype=float)
    if not t_end > 0:
        if t_end == 0:
            return x0.copy()
        raise InvalidParameter("t_end must be nonnegative")
    if not h_ref > 0:
        raise InvalidParameter("h_ref must be positive")
    n = max(1, math.ceil(t_end / h_ref - 1e-9))
    x, _, _ = _verified(problem, x0, t_end / n, 1, n, rel_tol, max_refinements)
    return x


def reference_trajectory(problem: OdeProblem, x0, h: float, n_steps: int, substeps: int = 100,
                         rel_tol: float = 1e-11, max_refinements: int = 3) -> np.ndarray:
    """Reference states at ``t_k = k h`` for ``k = 0..n_steps``."""
    if n_steps == 0:
        return np.asarray(x0, dtype=float)[None, :].copy()
    _, rec, _ = _verified(problem, x0, h / substeps, n_steps, substeps, rel_tol, max_refinements)
    return rec


# -- configuration --------------------------------------------------------------


@dataclass(frozen=True)
class MethodSpec:
    label: str
    stepper: Stepper


def method_spec(method: str, label: Optional[str] = None, **kwargs) -> MethodSpec:
    return MethodSpec(label or method, Stepper(method, **kwargs))


STUDY_METHODS = {
    "simulate": ("dg_linear",),
    "conserve": ("rk", "projection", "dg_linear"),
    "order": ("rk", "projection", "dg_linear"),
    "efficiency": ("rk", "projection", "dg_linear"),
    "stepcrit": ("dg_linear",),
    "phase": ("rk", "dg_linear"),
}


# At h = 100/92 a few steps of the rigid-body orbit dip just under the default
# floor of 1/2; the scheme still conserves I there, so the phase study relaxes it.
PHASE_DENOM_FLOOR = 0.25


def _default_stepcrit_grid():
    return tuple(10.0 ** (k / 4.0) for k in range(-16, 13))


@dataclass
class ExperimentConfig:
    problem: str = "rigid_body_modified"
    problem_params: dict = field(default_factory=dict)
    x0: Optional[np.ndarray] = None
    methods: list = field(default_factory=list)
    h: float = 0.5
    h_values: tuple = (0.1, 0.05, 0.025, 0.0125)
    phase_h_values: tuple = (0.5, 100.0 / 92.0)
    t_end: float = 500.0
    t_sample: Optional[float] = None  # defaults to min(100, t_end)
    R_values: tuple = (1.0, 0.1, 0.01)
    stepcrit_h_values: tuple = field(default_factory=_default_stepcrit_grid)
    ref_factor: float = 100.0
    phase_ref_factor: int = 1000
    ref_rel_tol: float = 1e-11
    ref_max_refinements: int = 3
    out_dir: str = "results"
    seed: int = 0

    def __post_init__(self):
        self.h_values = tuple(float(h) for h in self.h_values)
        if any(b >= a for a, b in zip(self.h_values, self.h_values[1:])):
            raise InvalidParameter("h_values must be strictly decreasing")
        if any(h <= 0 for h in self.h_values) or not self.h > 0:
            raise InvalidParameter("step sizes must be positive")
        if self.t_sample is None:
            self.t_sample = min(100.0, self.t_end)
        if self.t_sample > self.t_end:
            raise InvalidParameter("t_sample must not exceed t_end")
        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float)

    def make_problem(self) -> OdeProblem:
        return make_problem(self.problem, **self.problem_params)

    def initial_state(self) -> np.ndarray:
        if self.x0 is not None:
            return self.x0.copy()
        return DEFAULT_X0[self.problem]()

    def methods_for(self, study: str) -> list:
        if self.methods:
            return list(self.methods)
        if study == "phase":
            relaxed = DgMethodConfig(skew=SkewConfig(denom_floor=PHASE_DENOM_FLOOR))
            return [method_spec("rk"), method_spec("dg_linear", config=relaxed)]
        return [method_spec(m) for m in STUDY_METHODS[study]]


# -- order fits -----------------------------------------------------------------

RESIDUAL_LIMIT = 0.3  # log10 units


@dataclass
class OrderFit:
    h: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    residuals: np.ndarray
    failed: list = field(default_factory=list)

    @property
    def reliable(self) -> bool:
        return not self.failed and bool(np.all(np.abs(self.residuals) <= RESIDUAL_LIMIT))


def fit_order(h, errors) -> OrderFit:
    """Least-squares line through ``(log10 h, log10 err)``."""
    h = np.asarray(h, dtype=float)
    errors = np.asarray(errors, dtype=float)
    ok = np.isfinite(errors) & (errors > 0)
    if ok.sum() < 2:
        raise InvalidParameter("need at least two positive errors to fit an order")
    lh, le = np.log10(h[ok]), np.log10(errors[ok])
    slope, intercept = np.polyfit(lh, le, 1)
    residuals = np.full(h.shape, np.nan)
    residuals[ok] = le - (slope * lh + intercept)
    failed = [float(v) for v in h[~ok]]
    return OrderFit(h, errors, float(slope), float(intercept), residuals, failed)


# -- studies --------------------------------------------------------------------


@dataclass
class RunRecord:
    label: str
    h: float
    error: float
    wall_time: float
    steps: int
    f_evals: int
    i_evals: int
    linear_solves: int
    newton_iters: int
    failure: str = ""
    trajectory: object = None


def _run(spec: MethodSpec, problem, x0, h, t_end, x_ref=None) -> RunRecord:
    t0 = time.perf_counter()
    try:
        traj = integrate(spec.stepper, problem, x0, h, t_end)
    except DiscGradError as exc:
        return RunRecord(spec.label, h, math.nan, time.perf_counter() - t0, 0, 0, 0, 0, 0,
                         failure=str(exc))
    wall = time.perf_counter() - t0
    err = math.nan if x_ref is None else float(np.linalg.norm(traj.final - x_ref))
    c = traj.cost
    return RunRecord(spec.label, h, err, wall, c.steps, c.f_evals, c.i_evals,
                     c.linear_solves, c.newton_iters, trajectory=traj)


def _sample_reference(cfg: ExperimentConfig, problem, x0):
    return reference_solution(problem, x0, cfg.t_sample, min(cfg.h_values) / cfg.ref_factor,
                              cfg.ref_rel_tol, cfg.ref_max_refinements)


def efficiency_study(cfg: ExperimentConfig, methods=None, study: str = "efficiency") -> list:
    """Error at ``t_sample`` and cost counters for every (method, h) pair."""
    problem, x0 = cfg.make_problem(), cfg.initial_state()
    x_ref = _sample_reference(cfg, problem, x0)
    records = []
    for spec in methods or cfg.methods_for(study):
        for h in cfg.h_values:
            records.append(_run(spec, problem, x0, h, cfg.t_sample, x_ref))
    return records


def order_study(cfg: ExperimentConfig, methods=None) -> dict:
    """Fit the observed order of every method; returns ``{label: OrderFit}``."""
    if len(cfg.h_values) < 4:
        raise InvalidParameter("order study needs at least four step sizes")
    records = efficiency_study(cfg, methods, study="order")
    fits = {}
    for label in dict.fromkeys(r.label for r in records):
        rows = [r for r in records if r.label == label]
        fits[label] = fit_order([r.h for r in rows], [r.error for r in rows])
    return fits


@dataclass
class ConservationResult:
    times: np.ndarray
    drift: dict          # label -> |I(x_k) - I(x_0)|
    relative_drift: dict  # label -> max over the run, relative to |I(x_0)|
    trajectories: dict


def conservation_study(cfg: ExperimentConfig, methods=None) -> ConservationResult:
    problem, x0 = cfg.make_problem(), cfg.initial_state()
    drift, rel, trajs = {}, {}, {}
    times = None
    for spec in methods or cfg.methods_for("conserve"):
        traj = integrate(spec.stepper, problem, x0, cfg.h, cfg.t_end)
        times = traj.times
        drift[spec.label] = traj.drift()
        rel[spec.label] = traj.max_relative_drift()
        trajs[spec.label] = traj
    return ConservationResult(times, drift, rel, trajs)


@dataclass
class StepCriterionRow:
    R: float
    h: float
    denom_ratio: float
    cond: float
    error: float
    status: str


@dataclass
class StepCriterionResult:
    rows: list
    largest_h: dict  # R -> largest grid h below which every step passes the denominator floor


_DIAGNOSTIC_FLOOR = 1e-300


def stepsize_criterion_study(cfg: ExperimentConfig, method_cfg: DgMethodConfig | None = None,
                             compute_error: bool = True) -> StepCriterionResult:
    """Single linearly implicit steps from ``x = R (cos 1.1, 0, sin 1.1)`` over a grid of h.

    Rows past the denominator floor are still evaluated (status
    ``below_floor``) so the breakdown of the denominator and condition number
    is visible; a nonpositive denominator gives status ``rejected``. The
    single-step error is measured only for steps that pass the floor.
    """
    problem = cfg.make_problem()
    method_cfg = method_cfg or DgMethodConfig()
    floor = method_cfg.skew.denom_floor
    diag_cfg = DgMethodConfig(
        tableau=method_cfg.tableau,
        skew=SkewConfig(method_cfg.skew.i_tilde, method_cfg.skew.i_hat, method_cfg.skew.i_breve,
                        method_cfg.skew.dg_kind, _DIAGNOSTIC_FLOOR),
        critical=method_cfg.critical,
    )
    direction = np.array([math.cos(1.1), 0.0, math.sin(1.1)])
    hs = sorted(float(h) for h in cfg.stepcrit_h_values)
    rows, largest = [], {}
    for R in cfg.R_values:
        x = R * direction
        i_x = eval_gradient(problem, x)
        g2 = float(i_x @ i_x)
        largest[R] = math.nan
        passing = True
        for h in hs:
            if method_cfg.critical.is_critical(x, i_x):
                rows.append(StepCriterionRow(R, h, math.nan, math.nan, 0.0, "critical"))
                largest[R] = math.inf
                continue
            try:
                A, rhs, _, denom = linear_step_matrix(diag_cfg, problem, x, h)
            except StepRejected as exc:
                rows.append(StepCriterionRow(R, h, exc.denom / g2, math.nan, math.nan, "rejected"))
                passing = False
                continue
            ratio = denom / g2
            cond = condition_number(A)
            ok = denom > floor * g2
            status = "ok" if ok else "below_floor"
            err = math.nan
            if ok and compute_error:
                try:
                    x_new = lu_solve(A, rhs)
                    x_ref = reference_solution(problem, x, h, min(h / cfg.ref_factor, 1e-2),
                                               cfg.ref_rel_tol, cfg.ref_max_refinements)
                    err = float(np.linalg.norm(x_new - x_ref))
                except DiscGradError as exc:
                    status = f"ok ({type(exc).__name__})"
            passing = passing and ok
            if passing:
                largest[R] = h
            rows.append(StepCriterionRow(R, h, ratio, cond, err, status))
    return StepCriterionResult(rows, largest)


@dataclass
class PhaseResult:
    trajectories: dict  # (label, h) -> Trajectory
    references: dict    # h -> reference states at the same nodes


def phase_trajectory_export(cfg: ExperimentConfig, methods=None,
                            with_reference: bool = True) -> PhaseResult:
    problem, x0 = cfg.make_problem(), cfg.initial_state()
    trajs, refs = {}, {}
    for h in cfg.phase_h_values:
        for spec in methods or cfg.methods_for("phase"):
            trajs[(spec.label, h)] = integrate(spec.stepper, problem, x0, h, cfg.t_end)
        if with_reference:
            n = int(round(cfg.t_end / h))
            refs[h] = reference_trajectory(problem, x0, h, n, int(cfg.phase_ref_factor),
                                           cfg.ref_rel_tol, cfg.ref_max_refinements)
    return PhaseResult(trajs, refs)
