"""Skew-gradient form of the vector field and its discretisation.

On ``{i(x) != 0}`` the field can be written ``f = S(x) i(x)`` with the
default skew matrix ``S = (f i^T - i f^T) / |i|^2``. A discrete gradient
method replaces it by

    St(x, xp, h) = (ft it^T - it ft^T) / (ih . ib)

where ``ft`` is an approximation of ``f`` (here an RK increment direction)
and ``it``, ``ih``, ``ib`` are approximations of ``i(x)`` chosen from
:class:`GradientApproxChoice`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .discrete_gradients import DiscreteGradientKind, discrete_gradient
from .errors import DegenerateGradient, InvalidParameter, StepRejected
from .problems import CostCounter, CriticalPointPolicy, OdeProblem, eval_gradient


class GradientApproxChoice(str, enum.Enum):
    AT_X = "at_x"                    # i(x)
    AT_XPRIME = "at_xprime"          # i(x')
    AVERAGE = "average"              # (i(x) + i(x')) / 2
    AT_MIDPOINT = "at_midpoint"      # i((x + x') / 2)
    DISCRETE_GRAD = "discrete_grad"  # dg(x, x')
    AT_Y = "at_y"                    # i(y),      y = x + h ft(x, h)
    DG_AT_Y = "dg_at_y"              # dg(x, y)

    @property
    def uses_xprime(self) -> bool:
        return self in _XPRIME_CHOICES

    @classmethod
    def parse(cls, value) -> "GradientApproxChoice":
        try:
            return cls(value)
        except ValueError:
            raise InvalidParameter(
                f"unknown gradient approximation {value!r}; choose from {[c.value for c in cls]}"
            ) from None


_XPRIME_CHOICES = frozenset({
    GradientApproxChoice.AT_XPRIME,
    GradientApproxChoice.AVERAGE,
    GradientApproxChoice.AT_MIDPOINT,
    GradientApproxChoice.DISCRETE_GRAD,
})


@dataclass(frozen=True)
class SkewConfig:
    """Choice of ``it``, ``ih``, ``ib`` plus the discrete gradient and denominator floor.

    The defaults give the linearly implicit method for quadratic integrals:
    ``it = ih = i(x)`` and ``ib = dg(x, y)``.
    """

    i_tilde: GradientApproxChoice = GradientApproxChoice.AT_X
    i_hat: GradientApproxChoice = GradientApproxChoice.AT_X
    i_breve: GradientApproxChoice = GradientApproxChoice.DG_AT_Y
    dg_kind: DiscreteGradientKind = field(default_factory=DiscreteGradientKind)
    denom_floor: float = 0.5

    def __post_init__(self):
        for name in ("i_tilde", "i_hat", "i_breve"):
            object.__setattr__(self, name, GradientApproxChoice.parse(getattr(self, name)))
        if not 0.0 < self.denom_floor <= 1.0:
            raise InvalidParameter("denom_floor must lie in (0, 1]")

    @property
    def xprime_free(self) -> bool:
        """True when ``St`` does not depend on ``x'``."""
        return not any(c.uses_xprime for c in (self.i_tilde, self.i_hat, self.i_breve))


def default_skew(f_val, i_val) -> np.ndarray:
    f_val = np.asarray(f_val, dtype=float)
    i_val = np.asarray(i_val, dtype=float)
    n2 = float(i_val @ i_val)
    if n2 == 0.0:
        raise DegenerateGradient("default skew matrix needs a nonzero gradient")
    return (np.outer(f_val, i_val) - np.outer(i_val, f_val)) / n2


class SkewContext:
    """Per-step cache of the gradient quantities entering ``St(x, z, h)``.

    Quantities that depend only on ``(x, h)`` (``i(x)``, ``y``, ``i(y)``,
    ``dg(x, y)``) are computed once; those depending on ``z`` are recomputed
    for every new ``z``.
    """

    def __init__(self, cfg: SkewConfig, problem: OdeProblem, f_tilde_val, x, h: float,
                 i_x=None, cost: CostCounter | None = None):
        self.cfg = cfg
        self.problem = problem
        self.ft = np.asarray(f_tilde_val, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.h = float(h)
        self.cost = cost
        self.i_x = eval_gradient(problem, self.x, cost) if i_x is None else i_x
        self.i_x_sq = float(self.i_x @ self.i_x)
        self._fixed = {}

    def _grad(self, z):
        return eval_gradient(self.problem, z, self.cost)

    def _dg(self, z):
        return discrete_gradient(self.cfg.dg_kind, self.problem.integral, self.x, z, self.cost)

    @property
    def y(self):
        if "y" not in self._fixed:
            self._fixed["y"] = self.x + self.h * self.ft
        return self._fixed["y"]

    def _fixed_value(self, choice):
        if choice not in self._fixed:
            if choice is GradientApproxChoice.AT_X:
                val = self.i_x
            elif choice is GradientApproxChoice.AT_Y:
                val = self._grad(self.y)
            else:
                val = self._dg(self.y)
            self._fixed[choice] = val
        return self._fixed[choice]

    def evaluate(self, z, need_dg: bool = False):
        """Return ``(St, denom, dg(x, z) or None)`` at the point ``z``."""
        cfg = self.cfg
        local = {}

        def value(choice):
            if not choice.uses_xprime:
                return self._fixed_value(choice)
            if choice in local:
                return local[choice]
            if choice is GradientApproxChoice.AT_XPRIME:
                val = self._grad(z)
            elif choice is GradientApproxChoice.AVERAGE:
                val = 0.5 * (self.i_x + value(GradientApproxChoice.AT_XPRIME))
            elif choice is GradientApproxChoice.AT_MIDPOINT:
                val = self._grad(0.5 * (self.x + z))
            else:
                val = self._dg(z)
            local[choice] = val
            return val

        it = value(cfg.i_tilde)
        denom = float(value(cfg.i_hat) @ value(cfg.i_breve))
        floor = cfg.denom_floor * self.i_x_sq
        if not denom > floor:
            raise StepRejected(
                f"denominator {denom:.6e} <= {cfg.denom_floor:g}*|i(x)|^2 = {floor:.6e}; reduce h",
                denom=denom, floor=floor,
            )
        St = (np.outer(self.ft, it) - np.outer(it, self.ft)) / denom
        dg = value(GradientApproxChoice.DISCRETE_GRAD) if need_dg else None
        return St, denom, dg


def discrete_skew(cfg: SkewConfig, problem: OdeProblem, f_tilde_val, x, xp, h: float,
                  critical: CriticalPointPolicy | None = None,
                  cost: CostCounter | None = None):
    """Return ``(St, denom)`` for the configured gradient approximations.

    Raises :class:`StepRejected` when ``denom <= denom_floor * |i(x)|^2`` and
    :class:`DegenerateGradient` when ``x`` is a critical point.
    """
    if h < 0:
        raise InvalidParameter("h must be nonnegative")
    critical = critical or CriticalPointPolicy()
    ctx = SkewContext(cfg, problem, f_tilde_val, x, h, cost=cost)
    if critical.is_critical(ctx.x, ctx.i_x):
        raise DegenerateGradient("x is a critical point of the integral")
    St, denom, _ = ctx.evaluate(np.asarray(xp, dtype=float))
    return St, denom
