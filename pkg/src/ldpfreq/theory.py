"""Closed-form losses and information-theoretic bounds.

All formulas describe the symmetric-configuration estimator: an affine
map of per-value support counts with self-support probability ``p*`` and
cross-support probability ``q*``.  The module provides

* the (p*, q*) pair for a constant support size ``k``,
* per-coordinate variance, both in (p*, q*) form and as an explicit
  function of (d, epsilon, k),
* worst-case L1/L2 losses, their minimizing support size, and the
  strict lower bounds they attain,
* deviation factors quantifying the cost of rounding the ideal support
  size to an integer and of extending the dictionary to a prime,
* the Fisher-information lower bound for arbitrary perturbation
  matrices, and the one-round communication bound.

Frequency mode measures error against the realized dataset composition;
distribution mode targets the sampling distribution and therefore adds
the dataset's own multinomial variance ``(f - f^2) / n`` per coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import invert
from .model import EstimationMode, PrivacyBudget, SchemeParams


def scheme_params(d: int, budget: PrivacyBudget, k: int) -> SchemeParams:
    """Support probabilities of the optimal symmetric configuration.

    With ``D = k(e^eps - 1) + d``:

        p* = e^eps * k / D
        q* = (e^eps - 1) k (k - 1) / ((d - 1) D)  +  k / D

    ``q*`` is the exact cross-support probability: a response supports a
    wrong value either because the true value's response set happened to
    contain both, or through the base-probability floor.
    """
    if d < 2:
        raise ValueError(f"dictionary size must be >= 2, got {d}")
    if not 1 <= k <= d - 1:
        raise ValueError(f"support size must lie in [1, d-1], got {k}")
    e = budget.e_eps
    big_d = k * (e - 1.0) + d
    p_star = e * k / big_d
    q_star = (e - 1.0) * k * (k - 1.0) / ((d - 1.0) * big_d) + k / big_d
    return SchemeParams(d=d, k=k, budget=budget, p_star=p_star, q_star=q_star)


def sym_variance(
    p_star: float,
    q_star: float,
    f_x: float,
    n: int,
    mode: EstimationMode = EstimationMode.FREQUENCY,
) -> float:
    """Variance of the affine support-count estimator at one coordinate.

    ``q*(1-q*) / (n (p*-q*)^2) + f_x (1-p*-q*) / (n (p*-q*))``, valid for
    any symmetric scheme (constant support size not required).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not q_star < p_star:
        raise ValueError("need q_star < p_star")
    gap = p_star - q_star
    var = q_star * (1.0 - q_star) / (n * gap * gap) + f_x * (1.0 - p_star - q_star) / (n * gap)
    if mode is EstimationMode.DISTRIBUTION:
        var += (f_x - f_x * f_x) / n
    return var


def _osc_terms(d: int, e: float, k: float, n: int) -> tuple[float, float]:
    """Constant and frequency-linear parts of the support-size-k variance.

    The linear coefficient is the composed form
    ``((d-1)(d-2k) - (e^eps-1) k (k-1)) / (n k (e^eps-1) (d-k))``,
    algebraically identical to ``(1 - p* - q*) / (n (p* - q*))``.
    """
    if not 0.0 < k < d:
        raise ValueError(f"support size must lie in (0, d), got {k}")
    em1 = e - 1.0
    big_d = k * em1 + d
    const = (big_d - 1.0) * (big_d - e) / (n * k * (d - k) * em1 * em1)
    coeff = ((d - 1.0) * (d - 2.0 * k) - em1 * k * (k - 1.0)) / (n * k * em1 * (d - k))
    return const, coeff


def osc_variance(
    f_x: float,
    d: int,
    budget: PrivacyBudget,
    k: int,
    n: int,
    mode: EstimationMode = EstimationMode.FREQUENCY,
) -> float:
    """Per-coordinate estimator variance at support size ``k``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    const, coeff = _osc_terms(d, budget.e_eps, k, n)
    var = const + coeff * f_x
    if mode is EstimationMode.DISTRIBUTION:
        var += (f_x - f_x * f_x) / n
    return var


def l2_of_k(
    d: int,
    budget: PrivacyBudget,
    n: int,
    k: float,
    mode: EstimationMode = EstimationMode.FREQUENCY,
) -> float:
    """Worst-case (uniform-truth) L2 loss at support size ``k``.

    Real-valued ``k`` is accepted so the curve can be evaluated between
    integers; deployable schemes use integer ``k``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    const, coeff = _osc_terms(d, budget.e_eps, k, n)
    loss = d * const + coeff
    if mode is EstimationMode.DISTRIBUTION:
        loss += (1.0 - 1.0 / d) / n
    return loss


def optimal_support_size(d: int, budget: PrivacyBudget) -> int:
    """Integer support size minimizing the worst-case L2 loss.

    The unconstrained minimizer is ``d / (e^eps + 1)``; the best integer
    is one of its neighbors (ties go to the smaller size).
    """
    if d < 2:
        raise ValueError(f"dictionary size must be >= 2, got {d}")
    ratio = d / (budget.e_eps + 1.0)
    if ratio <= 1.0:
        return 1
    lo = max(1, min(d - 1, math.floor(ratio)))
    hi = max(1, min(d - 1, math.ceil(ratio)))
    if lo == hi:
        return lo
    return lo if l2_of_k(d, budget, 1, lo) <= l2_of_k(d, budget, 1, hi) else hi


def l2_star(
    d: int,
    budget: PrivacyBudget,
    n: int,
    mode: EstimationMode = EstimationMode.FREQUENCY,
    integer_k: bool = False,
) -> float:
    """Minimal worst-case L2 loss.

    With ``integer_k=False`` this is the strict lower bound over all
    mechanisms, attained at the real-valued support size
    ``d / (e^eps + 1)`` when that exceeds 1 and at ``k = 1`` otherwise.
    With ``integer_k=True`` it is the best deployable value,
    ``l2_of_k`` at ``optimal_support_size``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if integer_k:
        return l2_of_k(d, budget, n, optimal_support_size(d, budget), mode)
    e = budget.e_eps
    em1 = e - 1.0
    if d >= e + 1.0:
        loss = (d - 1.0) * (4.0 * d * e - (e + 1.0) ** 2) / (n * d * em1 * em1)
    else:
        loss = (d - 1.0) * (d + 2.0 * e - 2.0) / (n * em1 * em1)
    if mode is EstimationMode.DISTRIBUTION:
        loss += (1.0 - 1.0 / d) / n
    return loss


def l1_from_l2(l2: float, d: int) -> float:
    """L1 loss implied by an L2 loss spread evenly over ``d`` coordinates.

    Gaussian-error relation: ``sqrt(2 d L2 / pi)``.
    """
    return math.sqrt(2.0 * d * l2 / math.pi)


def l1_star(
    d: int,
    budget: PrivacyBudget,
    n: int,
    mode: EstimationMode = EstimationMode.FREQUENCY,
    integer_k: bool = False,
) -> float:
    """Minimal worst-case L1 loss."""
    return l1_from_l2(l2_star(d, budget, n, mode, integer_k), d)


def rounding_deviation_alpha(d: int, budget: PrivacyBudget) -> float:
    """Worst-case relative L2 excess from rounding the ideal support size.

    Valid for ``d >= e^eps + 1``; evaluating the loss half a step away
    from the real minimizer exceeds the strict bound by at most

        alpha = (d-1)(e^eps+1)^4 /
                ((2d+e^eps+1)(2de^eps-e^eps-1)(4de^eps-(e^eps+1)^2))
    """
    e = budget.e_eps
    if d < e + 1.0:
        raise ValueError("rounding deviation is defined for d >= e^eps + 1")
    num = (d - 1.0) * (e + 1.0) ** 4
    den = (2.0 * d + e + 1.0) * (2.0 * d * e - e - 1.0) * (4.0 * d * e - (e + 1.0) ** 2)
    return num / den


@dataclass(frozen=True)
class DeviationFactors:
    """Relative L2 excesses of the sketch construction.

    ``alpha``: rounding the bucket count to an integer.
    ``beta``: extending the dictionary to the next prime ``d_prime``.
    ``product_excess``: combined ``(1+alpha)(1+beta) - 1``.
    """

    alpha: float
    beta: float
    product_excess: float


def ocms_deviation_factors(d: int, d_prime: int, budget: PrivacyBudget) -> DeviationFactors:
    """How far the prime-extended sketch sits above the strict L2 bound."""
    e = budget.e_eps
    if d_prime < d:
        raise ValueError("extended dictionary cannot shrink")
    if d <= e + 1.0:
        raise ValueError("deviation factors are defined for d > e^eps + 1")
    four = 4.0 * d * e - (e + 1.0) ** 2
    alpha = (d - 1.0) * (e + 1.0) ** 4 / (four * (d - e - 1.0) * (d * e + e + 1.0))
    beta = (
        (d_prime - d)
        * (e + 1.0) ** 2
        * (2.0 * d * d_prime - d - d_prime)
        / (d_prime * d_prime * (d - 1.0) * four)
    )
    return DeviationFactors(
        alpha=alpha, beta=beta, product_excess=(1.0 + alpha) * (1.0 + beta) - 1.0
    )


def ocms_mixture_l2(
    d: int,
    d_prime: int,
    hash_range: int,
    budget: PrivacyBudget,
    n: int,
    mode: EstimationMode = EstimationMode.FREQUENCY,
) -> float:
    """Worst-case L2 of the sketch estimator over the first ``d`` values.

    The sketch behaves as a mixture of two constant-support
    configurations on the extended dictionary: support size
    ``floor(d'/B) + 1`` with weight ``(d' mod B)/B`` and ``floor(d'/B)``
    otherwise.  Empty-bucket responses (possible only when ``B > d'``)
    carry no information, so that corner rescales by the informative
    response rate instead.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if hash_range < 2 or d_prime < d:
        raise ValueError("need hash range >= 2 and d_prime >= d")
    e = budget.e_eps
    k_lo, r = divmod(d_prime, hash_range)
    k_hi = k_lo + 1
    p_alpha = r / hash_range
    if r == 0:
        const, coeff = _osc_terms(d_prime, e, k_lo, n)
    elif k_lo == 0:
        # Exact share of responses landing in nonempty buckets.
        w_hi = r * (d_prime + (e - 1.0) * k_hi) / (d_prime * (hash_range + e - 1.0))
        const, coeff = _osc_terms(d_prime, e, k_hi, n)
        const, coeff = const / w_hi, coeff / w_hi
    else:
        const_hi, coeff_hi = _osc_terms(d_prime, e, k_hi, n)
        const_lo, coeff_lo = _osc_terms(d_prime, e, k_lo, n)
        const = p_alpha * const_hi + (1.0 - p_alpha) * const_lo
        coeff = p_alpha * coeff_hi + (1.0 - p_alpha) * coeff_lo
    loss = d * const + coeff
    if mode is EstimationMode.DISTRIBUTION:
        loss += (1.0 - 1.0 / d) / n
    return loss


@dataclass(frozen=True)
class FisherBound:
    """Cramer-Rao style floor on unbiased estimation losses."""

    l2_lb: float
    l1_lb: float
    per_coordinate: np.ndarray


def fisher_lower_bound(matrix, theta, n: int) -> FisherBound:
    """Information bound for a given perturbation matrix at truth ``theta``.

    Builds the unconstrained information matrix
    ``I = P^T diag(P theta)^{-1} P``, inverts it, and removes the
    simplex direction: the constrained covariance floor is
    ``I^{-1} - theta theta^T``.  Rows with zero mass under ``theta``
    never occur and are dropped.  ``l1_lb`` assumes Gaussian errors,
    ``sum_x sqrt(2 (I^{-1} - theta theta^T)_{xx} / (n pi))``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    p = np.asarray(matrix, dtype=np.float64)
    t = np.asarray(theta, dtype=np.float64)
    if p.ndim != 2 or t.ndim != 1 or p.shape[1] != t.size:
        raise ValueError(f"incompatible shapes: P {p.shape}, theta {t.shape}")
    mass = p @ t
    live = mass > 0.0
    info = (p[live] / mass[live, None]).T @ p[live]
    cov = invert(info)
    per_coord = np.clip(np.diag(cov) - t * t, 0.0, None) / n
    l2_lb = (float(np.trace(cov)) - float(t @ t)) / n
    l1_lb = float(np.sqrt(2.0 * per_coord / math.pi).sum())
    return FisherBound(l2_lb=l2_lb, l1_lb=l1_lb, per_coordinate=per_coord)


def reconstruction_trace(matrix) -> float:
    """``Tr((P^T Pbar^{-1} P)^{-1})`` with ``Pbar = diag`` of row means.

    The uniform-truth information trace; ``(trace - 1)/n`` is the best
    frequency-mode L2 any reconstruction of ``P`` can achieve, and
    ``(trace - 1/d)/n`` the distribution-mode analogue.
    """
    p = np.asarray(matrix, dtype=np.float64)
    pbar = p.mean(axis=1)
    if np.any(pbar <= 0.0):
        raise ValueError("every response must have positive average mass")
    info = (p / pbar[:, None]).T @ p
    return float(np.trace(invert(info)))


def comm_bound_bits(d: int) -> float:
    """Bits per report sufficient for any optimal mechanism.

    A minimal optimal scheme never needs more than ``d(d-1)/2 + 1``
    distinct responses, hence ``log2`` of that many labels.
    """
    if d < 2:
        raise ValueError(f"dictionary size must be >= 2, got {d}")
    return math.log2(d * (d - 1) / 2 + 1)
