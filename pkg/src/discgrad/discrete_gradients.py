"""Discrete gradients of a first integral.

A discrete gradient ``dg(x, xp)`` is continuous and satisfies

    dg(x, xp) . (xp - x) = I(xp) - I(x),      dg(x, x) = i(x).

Three constructions are available:

* ``midpoint``: ``i((x + xp)/2)``, a discrete gradient only for quadratic I.
* ``mean_value``: ``int_0^1 i(x + s (xp - x)) ds`` by Gauss-Legendre
  quadrature. Exact when the quadrature integrates ``i`` exactly along the segment.
* ``coordinate_increment``: Itoh-Abe difference quotients along the staircase
  path that updates coordinates in index order 1..d.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidParameter, UnsupportedIntegral
from .problems import CostCounter, FirstIntegral

MIDPOINT = "midpoint"
MEAN_VALUE = "mean_value"
COORDINATE_INCREMENT = "coordinate_increment"
_KINDS = (MIDPOINT, MEAN_VALUE, COORDINATE_INCREMENT)

# relative width under which an Itoh-Abe quotient is replaced by its limit
DEGENERATE_REL = 1e-14


@dataclass(frozen=True)
class DiscreteGradientKind:
    name: str = MIDPOINT
    quadrature_nodes: int = 3

    def __post_init__(self):
        if self.name not in _KINDS:
            raise InvalidParameter(f"unknown discrete gradient {self.name!r}; choose from {_KINDS}")
        if int(self.quadrature_nodes) < 1:
            raise InvalidParameter("quadrature_nodes must be >= 1")

    @classmethod
    def midpoint(cls):
        return cls(MIDPOINT)

    @classmethod
    def mean_value(cls, nodes: int = 3):
        return cls(MEAN_VALUE, nodes)

    @classmethod
    def coordinate_increment(cls):
        return cls(COORDINATE_INCREMENT)


@lru_cache(maxsize=None)
def _gauss_legendre_unit(n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _grad(integral: FirstIntegral, x, cost):
    if cost is not None:
        cost.i_evals += 1
    return np.asarray(integral.gradient(x), dtype=float)


def _value(integral: FirstIntegral, x, cost):
    if cost is not None:
        cost.i_evals += 1
    return float(integral.value(x))


def discrete_gradient(kind: DiscreteGradientKind, integral: FirstIntegral, x, xp,
                      cost: CostCounter | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    if x.shape != xp.shape:
        raise InvalidParameter("x and xp must have the same shape")

    if kind.name == MIDPOINT:
        if integral.quadratic_form is None:
            raise UnsupportedIntegral("midpoint discrete gradient requires a quadratic integral")
        return _grad(integral, 0.5 * (x + xp), cost)

    if kind.name == MEAN_VALUE:
        s, w = _gauss_legendre_unit(int(kind.quadrature_nodes))
        dx = xp - x
        out = np.zeros_like(x)
        for sk, wk in zip(s, w):
            out += wk * _grad(integral, x + sk * dx, cost)
        return out

    return _coordinate_increment(integral, x, xp, cost)


def _coordinate_increment(integral, x, xp, cost):
    d = x.shape[0]
    out = np.empty(d)
    z = x.copy()
    I_prev = _value(integral, z, cost)
    for j in range(d):
        delta = xp[j] - x[j]
        if abs(delta) < DEGENERATE_REL * (1.0 + abs(x[j])):
            mixed = z.copy()
            mixed[j] = 0.5 * (x[j] + xp[j])
            out[j] = _grad(integral, mixed, cost)[j]
            z[j] = xp[j]
            if delta != 0.0:
                I_prev = _value(integral, z, cost)
            continue
        z[j] = xp[j]
        I_next = _value(integral, z, cost)
        out[j] = (I_next - I_prev) / delta
        I_prev = I_next
    return out


def verify_dg_identity(kind: DiscreteGradientKind, integral: FirstIntegral, x, xp) -> float:
    """Residual ``|dg(x,xp).(xp-x) - (I(xp)-I(x))|``."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    g = discrete_gradient(kind, integral, x, xp)
    return abs(float(g @ (xp - x)) - (float(integral.value(xp)) - float(integral.value(x))))
