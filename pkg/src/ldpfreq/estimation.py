"""Turning responses into unbiased frequency estimates.

The production path for all shipped mechanisms is the symmetric one:
count, per value, how many responses support it, then invert the affine
map ``count/n = f p* + (1-f) q*``.  The general linear path (an explicit
reconstruction matrix applied to the response histogram) exists for
user-supplied perturbation matrices and for cross-checking: on a
symmetric scheme the optimal reconstruction reproduces the symmetric
estimator exactly.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from .linalg import invert
from .model import EstimationMode, SupportCounts


def aggregate_counts(
    supports: Callable[[object, int], bool], responses: Sequence, d: int
) -> SupportCounts:
    """Count supporting responses per value via a membership predicate.

    Reference implementation, O(n d) predicate calls; the mechanism
    classes provide vectorized equivalents for their own wire formats.
    """
    if d < 1:
        raise ValueError("dictionary size must be >= 1")
    counts = np.zeros(d, dtype=np.int64)
    n = 0
    for response in responses:
        n += 1
        for x in range(d):
            if supports(response, x):
                counts[x] += 1
    return SupportCounts(counts=counts, n=n)


def estimate_symmetric(counts: SupportCounts, p_star: float, q_star: float) -> np.ndarray:
    """Unbiased estimate ``(counts/n - q*) / (p* - q*)``.

    For any constant-support scheme the result sums to exactly 1 (up to
    rounding), because each response lifts total support mass by the
    same amount.  Entries may fall outside [0, 1]; they are reported
    as-is, never clipped.
    """
    if counts.n < 1:
        raise ValueError("need at least one response")
    if not q_star < p_star:
        raise ValueError(f"need q_star < p_star, got p={p_star}, q={q_star}")
    return (counts.counts / counts.n - q_star) / (p_star - q_star)


def optimal_reconstruction(matrix) -> np.ndarray:
    """Reconstruction map minimizing worst-case L2 for a perturbation matrix.

    ``Q = (P^T Pbar^{-1} P)^{-1} P^T Pbar^{-1}`` with ``Pbar`` the
    diagonal of row means; satisfies ``Q P = I`` (unbiasedness).
    """
    p = np.asarray(matrix, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError("perturbation matrix must be 2-D")
    pbar = p.mean(axis=1)
    if np.any(pbar <= 0.0):
        raise ValueError("every response must have positive average mass")
    weighted = p / pbar[:, None]
    return invert(weighted.T @ p) @ weighted.T


def linear_estimate(reconstruction, output_freq) -> np.ndarray:
    """Apply a reconstruction matrix to the observed response histogram."""
    q = np.asarray(reconstruction, dtype=np.float64)
    h = np.asarray(output_freq, dtype=np.float64)
    if q.ndim != 2 or h.ndim != 1 or q.shape[1] != h.size:
        raise ValueError(f"incompatible shapes: Q {q.shape}, histogram {h.shape}")
    return q @ h


def linear_variance(
    matrix,
    reconstruction,
    truth,
    n: int,
    mode: EstimationMode = EstimationMode.FREQUENCY,
) -> np.ndarray:
    """Exact per-coordinate variance of an unbiased linear estimator.

    Frequency mode: ``((Q o Q) P f - f) / n`` where ``o`` is the
    elementwise square.  Distribution mode replaces the subtracted term
    by ``theta^2``, absorbing the dataset's own sampling noise.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    p = np.asarray(matrix, dtype=np.float64)
    q = np.asarray(reconstruction, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if q.shape[1] != p.shape[0] or p.shape[1] != t.size or q.shape[0] != t.size:
        raise ValueError(
            f"incompatible shapes: P {p.shape}, Q {q.shape}, truth {t.shape}"
        )
    second_moment = (q * q) @ (p @ t)
    if mode is EstimationMode.FREQUENCY:
        return (second_moment - t) / n
    return (second_moment - t * t) / n


def empirical_losses(estimate, truth) -> tuple[float, float]:
    """L1 and squared-L2 distance between an estimate and the truth."""
    e = np.asarray(estimate, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if e.shape != t.shape:
        raise ValueError(f"length mismatch: estimate {e.shape}, truth {t.shape}")
    diff = e - t
    return float(np.abs(diff).sum()), float(diff @ diff)
