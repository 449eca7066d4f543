"""Small dense linear-algebra kernels used by the estimators.

Two routines live here: a Gauss-Jordan matrix inverse with partial
pivoting (reconstruction maps, information-matrix bounds) and a
Lawson-Hanson style active-set nonnegative least squares solver (weighted
subset scheme construction).  Both operate on plain float64 arrays and
are sized for the small systems this package produces, not for HPC.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingularMatrixError(ValueError):
    """Pivot collapsed below tolerance during elimination."""


class IterationLimitError(RuntimeError):
    """Active-set iteration budget exhausted before convergence."""


def invert(matrix, tol: float = 1e-12) -> np.ndarray:
    """Invert a square matrix by Gauss-Jordan elimination.

    Partial pivoting: each elimination step swaps in the row with the
    largest remaining pivot candidate.  A pivot smaller than
    ``tol * max|A|`` raises ``SingularMatrixError``.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    scale = float(np.abs(a).max())
    if scale == 0.0:
        raise SingularMatrixError("matrix is identically zero")
    aug = np.hstack([a, np.eye(n)])
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(aug[col:, col])))
        pivot = aug[pivot_row, col]
        if abs(pivot) <= tol * scale:
            raise SingularMatrixError(f"pivot {pivot:.3e} below tolerance at column {col}")
        if pivot_row != col:
            aug[[col, pivot_row]] = aug[[pivot_row, col]]
        aug[col] /= aug[col, col]
        others = np.arange(n) != col
        aug[others] -= np.outer(aug[others, col], aug[col])
    return aug[:, n:]


@dataclass(frozen=True)
class NnlsResult:
    x: np.ndarray
    residual: float
    iterations: int


def nnls(a, y, tol: float = 1e-10, max_iter: int | None = None) -> NnlsResult:
    """Solve ``min ||A x - y||_2`` subject to ``x >= 0``.

    Classic active-set iteration: repeatedly move the coordinate with the
    most negative gradient into the passive set, solve the unconstrained
    least squares on the passive columns, and step back along the segment
    to the previous iterate whenever the candidate leaves the feasible
    orthant.  Terminates when no active coordinate has gradient below
    ``-tol`` (so the result satisfies the KKT conditions at ``tol``).
    """
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if a.ndim != 2 or y.ndim != 1 or a.shape[0] != y.size:
        raise ValueError(f"incompatible shapes: A {a.shape}, y {y.shape}")
    m, w = a.shape
    if max_iter is None:
        max_iter = max(10 * w, 30)

    x = np.zeros(w)
    passive = np.zeros(w, dtype=bool)
    grad_neg = a.T @ (y - a @ x)  # negative gradient of the objective
    iterations = 0
    while True:
        candidates = np.where(~passive, grad_neg, -np.inf)
        if not np.any(~passive) or candidates.max() <= tol:
            break
        iterations += 1
        if iterations > max_iter:
            raise IterationLimitError(f"no convergence after {max_iter} active-set steps")
        passive[int(np.argmax(candidates))] = True

        # Inner loop: restore feasibility of the passive-set LS solution.
        while True:
            z = np.zeros(w)
            cols = np.flatnonzero(passive)
            z[cols] = np.linalg.lstsq(a[:, cols], y, rcond=None)[0]
            if np.all(z[cols] > 0.0):
                x = z
                break
            shrink = passive & (z <= 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.where(shrink, x / (x - z), np.inf)
            alpha = float(steps.min())
            x = x + alpha * (z - x)
            passive &= x > 0.0
            x[~passive] = 0.0
        grad_neg = a.T @ (y - a @ x)

    residual = float(np.linalg.norm(a @ x - y))
    return NnlsResult(x=x, residual=residual, iterations=iterations)
