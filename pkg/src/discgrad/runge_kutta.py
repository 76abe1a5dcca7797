"""Butcher tableaus, stage solves and the plain Runge-Kutta step.

Only autonomous problems are treated, so tableaus carry no abscissae.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, NonConvergence
from .problems import CostCounter, OdeProblem, eval_field

STAGE_TOL = 1e-14
STAGE_MAX_ITER = 100


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    A: np.ndarray
    b: np.ndarray
    claimed_order: int
    name: str = "custom"

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        b = np.array(self.b, dtype=float).ravel()
        s = b.shape[0]
        if A.shape != (s, s):
            raise InvalidParameter(f"A has shape {A.shape}, expected ({s}, {s})")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InvalidParameter("tableau entries must be finite")
        if abs(b.sum() - 1.0) > 1e-14:
            raise InvalidParameter(f"inconsistent tableau: sum(b) = {b.sum()!r} != 1")
        if int(self.claimed_order) < 1:
            raise InvalidParameter("claimed_order must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def s(self) -> int:
        return self.b.shape[0]

    @property
    def explicit(self) -> bool:
        return bool(np.all(np.triu(self.A) == 0.0))


def rk4_classic() -> ButcherTableau:
    A = [[0, 0, 0, 0], [0.5, 0, 0, 0], [0, 0.5, 0, 0], [0, 0, 1, 0]]
    return ButcherTableau(A, [1 / 6, 1 / 3, 1 / 3, 1 / 6], 4, "rk4")


def explicit_euler() -> ButcherTableau:
    return ButcherTableau([[0.0]], [1.0], 1, "euler")


def implicit_midpoint() -> ButcherTableau:
    return ButcherTableau([[0.5]], [1.0], 2, "implicit_midpoint")


TABLEAUS = {
    "rk4": rk4_classic,
    "euler": explicit_euler,
    "implicit_midpoint": implicit_midpoint,
}


def make_tableau(name: str = "rk4", A=None, b=None, claimed_order: int = 1) -> ButcherTableau:
    if A is not None or b is not None:
        if A is None or b is None:
            raise InvalidParameter("custom tableau needs both rk_A and rk_b")
        return ButcherTableau(A, b, claimed_order, name)
    try:
        return TABLEAUS[name]()
    except KeyError:
        raise InvalidParameter(f"unknown tableau {name!r}; choose from {sorted(TABLEAUS)}") from None


def rk_stages(tab: ButcherTableau, problem: OdeProblem, u, h: float,
              tol: float = STAGE_TOL, max_iter: int = STAGE_MAX_ITER,
              cost: CostCounter | None = None) -> np.ndarray:
    """Stage derivatives ``K`` (shape d x s) with ``k_i = f(u + h sum_j a_ij k_j)``.

    Explicit tableaus use forward substitution (exactly ``s`` field
    evaluations). Implicit ones run the fixed-point map ``K <- T(K)`` started
    from every column equal to ``f(u)`` until the largest column change is at
    most ``tol``.
    """
    if h < 0:
        raise InvalidParameter("h must be nonnegative")
    if tol <= 0:
        raise InvalidParameter("tol must be positive")
    u = np.asarray(u, dtype=float)
    s = tab.s
    A = tab.A
    K = np.empty((u.shape[0], s))

    if tab.explicit:
        for i in range(s):
            arg = u.copy()
            for j in range(i):
                if A[i, j] != 0.0:
                    arg += (h * A[i, j]) * K[:, j]
            K[:, i] = eval_field(problem, arg, cost)
        return K

    f0 = eval_field(problem, u, cost)
    K[:] = f0[:, None]
    if h == 0.0:
        return K
    change = np.inf
    for _ in range(max_iter):
        K_new = np.empty_like(K)
        for i in range(s):
            K_new[:, i] = eval_field(problem, u + h * (K @ A[i]), cost)
        change = float(np.max(np.linalg.norm(K_new - K, axis=0)))
        K = K_new
        if change <= tol:
            return K
    raise NonConvergence(f"stage iteration did not converge in {max_iter} iterations "
                         f"(last change {change:.3e})", residual=change, iterations=max_iter)


def stage_residual(tab: ButcherTableau, problem: OdeProblem, u, h: float, K) -> float:
    """Largest column norm of ``K - f(u + h K A^T)``."""
    u = np.asarray(u, dtype=float)
    res = 0.0
    for i in range(tab.s):
        r = K[:, i] - eval_field(problem, u + h * (K @ tab.A[i]))
        res = max(res, float(np.linalg.norm(r)))
    return res


def f_tilde(tab: ButcherTableau, problem: OdeProblem, x, h: float,
            tol: float = STAGE_TOL, max_iter: int = STAGE_MAX_ITER,
            cost: CostCounter | None = None) -> np.ndarray:
    """RK increment direction ``sum_i b_i k_i``; equals ``f(x)`` at ``h = 0``."""
    K = rk_stages(tab, problem, x, h, tol, max_iter, cost)
    return K @ tab.b


def rk_step(tab: ButcherTableau, problem: OdeProblem, x, h: float,
            tol: float = STAGE_TOL, max_iter: int = STAGE_MAX_ITER,
            cost: CostCounter | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x + h * f_tilde(tab, problem, x, h, tol, max_iter, cost)
