"""Shared domain types for locally private frequency estimation.

Everything downstream (closed-form loss calculators, mechanism samplers,
estimators, the benchmark harness) speaks in terms of the small set of
types defined here:

* a privacy budget ``epsilon`` with its cached exponential,
* support schemes -- a 0/1 support matrix plus one base probability per
  response row, the canonical description of an extremal randomizer,
* dense perturbation matrices (plain ``numpy`` 2-D arrays, column
  stochastic, one column per dictionary value),
* frequency vectors, support counts and estimate vectors.

Vectors and matrices are deliberately bare ``numpy`` arrays; the helpers
``frequency_vector`` / ``perturbation_matrix`` validate and freeze them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

# Tolerances used when validating the probability structure of schemes.
COLUMN_IDENTITY_TOL = 1e-9
FREQ_SUM_TOL = 1e-12
LDP_RATIO_RTOL = 1e-9


class EstimationMode(Enum):
    """What the estimator is judged against.

    ``FREQUENCY``: the realized composition of the dataset in hand.
    ``DISTRIBUTION``: the underlying sampling distribution; adds the
    dataset's own multinomial noise to every variance.
    """

    FREQUENCY = "frequency"
    DISTRIBUTION = "distribution"


@dataclass(frozen=True)
class PrivacyBudget:
    """A local differential privacy level ``epsilon`` (> 0, finite)."""

    epsilon: float
    e_eps: float = field(init=False, repr=False)

    def __post_init__(self) -> None:
        eps = float(self.epsilon)
        if not math.isfinite(eps) or eps <= 0.0:
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "e_eps", math.exp(eps))


@dataclass(frozen=True)
class SchemeParams:
    """Self/cross support probabilities of a symmetric randomizer.

    ``p_star`` is the probability that a response supports the value it
    was produced from, ``q_star`` the probability that it supports any
    particular other value.  ``k`` is the (constant) number of values
    each response supports.
    """

    d: int
    k: int
    budget: PrivacyBudget
    p_star: float
    q_star: float

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError(f"dictionary size must be >= 2, got {self.d}")
        if not 1 <= self.k <= self.d - 1:
            raise ValueError(f"support size must lie in [1, d-1], got k={self.k}")
        if not (0.0 <= self.q_star < self.p_star <= 1.0):
            raise ValueError(
                f"need 0 <= q_star < p_star <= 1, got p={self.p_star}, q={self.q_star}"
            )


def frequency_vector(values, d: int | None = None) -> np.ndarray:
    """Validate ``values`` as a frequency vector and return a frozen copy.

    Entries must be nonnegative and sum to 1 within ``FREQ_SUM_TOL``.
    """
    f = np.asarray(values, dtype=np.float64).copy()
    if f.ndim != 1 or f.size < 1:
        raise ValueError("frequency vector must be a nonempty 1-D array")
    if d is not None and f.size != d:
        raise ValueError(f"expected length {d}, got {f.size}")
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ValueError("frequencies must be finite and nonnegative")
    total = float(f.sum())
    if abs(total - 1.0) > FREQ_SUM_TOL:
        raise ValueError(f"frequencies must sum to 1 (got {total})")
    f.flags.writeable = False
    return f


def perturbation_matrix(entries) -> np.ndarray:
    """Validate a dense perturbation matrix (m responses x d values).

    Each column is the response distribution for one input value, so
    entries are nonnegative and every column sums to 1 within 1e-9.
    """
    p = np.asarray(entries, dtype=np.float64).copy()
    if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 2:
        raise ValueError("perturbation matrix must be 2-D with at least 2 columns")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("perturbation matrix entries must be finite and nonnegative")
    col_sums = p.sum(axis=0)
    bad = np.abs(col_sums - 1.0) > COLUMN_IDENTITY_TOL
    if np.any(bad):
        x = int(np.argmax(bad))
        raise ValueError(f"column {x} sums to {col_sums[x]}, expected 1")
    p.flags.writeable = False
    return p


@dataclass(frozen=True)
class LdpReport:
    """Result of checking the per-row likelihood-ratio bound."""

    valid: bool
    worst_ratio: float


def validate_ldp(matrix, budget: PrivacyBudget, rtol: float = LDP_RATIO_RTOL) -> LdpReport:
    """Check that every row of ``matrix`` has max/min ratio <= e^epsilon.

    Rows containing some (but not only) zeros have infinite ratio and
    fail; rows that are entirely zero are structurally invalid and raise.
    """
    p = np.asarray(matrix, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 2:
        raise ValueError("matrix must be 2-D with at least 2 columns")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("matrix entries must be finite and nonnegative")
    row_max = p.max(axis=1)
    if np.any(row_max == 0.0):
        raise ValueError(f"row {int(np.argmax(row_max == 0.0))} is entirely zero")
    row_min = p.min(axis=1)
    with np.errstate(divide="ignore"):
        ratios = np.where(row_min > 0.0, row_max / np.maximum(row_min, 1e-300), np.inf)
    worst = float(ratios.max())
    return LdpReport(valid=worst <= budget.e_eps * (1.0 + rtol), worst_ratio=worst)


@dataclass(frozen=True, eq=False)
class SupportScheme:
    """An extremal randomizer: support matrix plus base probabilities.

    Row ``o`` of ``support`` marks the values response ``o`` vouches for;
    ``base_prob[o]`` is the probability of emitting ``o`` from a value it
    does not support.  Supported values are ``e^eps`` times likelier.
    Construction enforces the total-probability identity per column:

        (e^eps - 1) * sum_o S[o, x] * p[o] + sum_o p[o] == 1
    """

    support: np.ndarray
    base_prob: np.ndarray
    budget: PrivacyBudget

    def __post_init__(self) -> None:
        s = np.asarray(self.support, dtype=np.uint8).copy()
        p = np.asarray(self.base_prob, dtype=np.float64).copy()
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 2:
            raise ValueError("support matrix must be 2-D with at least 2 columns")
        if not np.all((self.support == 0) | (self.support == 1)):
            raise ValueError("support entries must be 0 or 1")
        if p.shape != (s.shape[0],):
            raise ValueError("need one base probability per response row")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("base probabilities must be finite and nonnegative")
        col = (self.budget.e_eps - 1.0) * (p @ s) + p.sum()
        dev = np.abs(col - 1.0)
        if np.any(dev > COLUMN_IDENTITY_TOL):
            x = int(np.argmax(dev))
            raise ValueError(
                f"total-probability identity broken at value {x}: column mass {col[x]}"
            )
        s.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "base_prob", p)

    @property
    def n_responses(self) -> int:
        return self.support.shape[0]

    @property
    def d(self) -> int:
        return self.support.shape[1]

    def row_support_sizes(self) -> np.ndarray:
        return self.support.sum(axis=1, dtype=np.int64)

    def support_mass(self) -> np.ndarray:
        """Per-value supported mass ``sum_o S[o, x] * p[o]``.

        Constant across values for any scheme passing the column
        identity; equals ``(1 - sum_o p[o]) / (e^eps - 1)``.
        """
        return self.base_prob @ self.support

    def to_perturbation_matrix(self) -> np.ndarray:
        e = self.budget.e_eps
        return perturbation_matrix(
            self.base_prob[:, None] * (1.0 + (e - 1.0) * self.support.astype(np.float64))
        )


def scheme_to_dict(scheme: SupportScheme, k: int) -> dict:
    sizes = scheme.row_support_sizes()
    if np.any(sizes != k):
        raise ValueError("scheme file format requires a constant support size")
    return {
        "d": scheme.d,
        "epsilon": scheme.budget.epsilon,
        "k": int(k),
        "responses": [
            {
                "support": [int(x) for x in np.flatnonzero(scheme.support[o])],
                "base_prob": float(scheme.base_prob[o]),
            }
            for o in range(scheme.n_responses)
        ],
    }


def scheme_from_dict(payload: dict) -> tuple[SupportScheme, int]:
    try:
        d = int(payload["d"])
        epsilon = float(payload["epsilon"])
        k = int(payload["k"])
        responses = payload["responses"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed scheme payload: {exc}") from exc
    if not responses:
        raise ValueError("scheme payload has no responses")
    support = np.zeros((len(responses), d), dtype=np.uint8)
    base = np.zeros(len(responses), dtype=np.float64)
    for o, resp in enumerate(responses):
        ids = resp["support"]
        if len(ids) != k or len(set(ids)) != k:
            raise ValueError(f"response {o} does not have {k} distinct support ids")
        if any(not 0 <= int(x) < d for x in ids):
            raise ValueError(f"response {o} has out-of-range support ids")
        support[o, [int(x) for x in ids]] = 1
        base[o] = float(resp["base_prob"])
    scheme = SupportScheme(support=support, base_prob=base, budget=PrivacyBudget(epsilon))
    return scheme, k


def save_scheme(scheme: SupportScheme, k: int, path) -> None:
    Path(path).write_text(json.dumps(scheme_to_dict(scheme, k), indent=2) + "\n", encoding="utf-8")


def load_scheme(path) -> tuple[SupportScheme, int]:
    return scheme_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True, eq=False)
class SupportCounts:
    """How many of ``n`` responses supported each dictionary value."""

    counts: np.ndarray
    n: int

    def __post_init__(self) -> None:
        c = np.asarray(self.counts, dtype=np.int64).copy()
        if c.ndim != 1 or c.size < 1:
            raise ValueError("counts must be a nonempty 1-D array")
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        if np.any(c < 0) or np.any(c > self.n):
            raise ValueError("counts must lie in [0, n]")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    @property
    def d(self) -> int:
        return self.counts.size


def merge_counts(*parts: SupportCounts) -> SupportCounts:
    """Combine disjoint shards of the same aggregation."""
    if not parts:
        raise ValueError("nothing to merge")
    d = parts[0].d
    if any(p.d != d for p in parts):
        raise ValueError("shards disagree on dictionary size")
    total = np.sum([p.counts for p in parts], axis=0)
    return SupportCounts(counts=total, n=sum(p.n for p in parts))


def largest_remainder_composition(dist, n: int) -> np.ndarray:
    """Round ``n * dist`` to an integer composition summing exactly to ``n``.

    Floors first, then hands the remaining units to the largest
    fractional parts; ties go to the lower index.
    """
    f = np.asarray(dist, dtype=np.float64)
    if n < 0:
        raise ValueError("n must be nonnegative")
    target = n * f
    base = np.floor(target).astype(np.int64)
    leftover = int(n - base.sum())
    if leftover > 0:
        frac = target - base
        order = np.lexsort((np.arange(f.size), -frac))
        base[order[:leftover]] += 1
    return base
