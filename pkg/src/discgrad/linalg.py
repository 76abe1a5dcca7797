"""Small dense linear algebra for the linearly implicit step and its diagnostics."""

from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg

from .errors import InvalidParameter, SingularStep

PIVOT_FLOOR = 1e-300


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParameter(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidParameter("matrix has non-finite entries")
    return A


def lu_solve(A, rhs) -> np.ndarray:
    """Solve ``A z = rhs`` by LU with partial pivoting.

    Raises :class:`SingularStep` when a pivot falls below ``1e-300`` in magnitude.
    """
    A = _square(A)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (A.shape[0],):
        raise InvalidParameter("right-hand side does not match matrix size")
    with warnings.catch_warnings():
        # a zero pivot is reported below as SingularStep
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < PIVOT_FLOOR:
        raise SingularStep(f"pivot {pivots.min():.3e} below {PIVOT_FLOOR:g}")
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def condition_number(A) -> float:
    """2-norm condition number ``sigma_max / sigma_min``.

    Singular values come from the eigenvalues of the symmetric matrix
    ``A^T A``. Returns ``inf`` when ``sigma_min < 1e-300``.
    """
    A = _square(A)
    lam = np.linalg.eigvalsh(A.T @ A)
    smax = math.sqrt(max(lam[-1], 0.0))
    smin = math.sqrt(max(lam[0], 0.0))
    if smin < PIVOT_FLOOR or smax == 0.0:
        return math.inf
    return max(smax / smin, 1.0)
