"""Mechanism samplers: subset selection, count-mean sketch, weighted subsets.

Each mechanism owns its wire format and the vectorized batch paths the
benchmark harness runs on:

* subset selection reports a uniform-looking ``k``-subset of the
  dictionary, biased to contain the true value with probability ``p*``;
  subsets serialize as combination ranks,
* the optimized count-mean sketch hashes into ``B`` buckets through a
  pairwise-uniform family over a prime-extended dictionary and applies
  randomized response to the bucket index; responses serialize as packed
  ``(a, b, z)`` triples,
* weighted subset selection reproduces the same support probabilities
  with at most ``d(d-1)/2 + 1`` response rows, found by nonnegative
  least squares over sampled candidate subsets.

Single-report ``perturb`` methods mirror what one client does; the
``perturb_batch`` / ``run`` paths produce identical marginals but
consume randomness in a different order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import IterationLimitError, nnls
from .model import (
    EstimationMode,
    PrivacyBudget,
    SchemeParams,
    SupportCounts,
    SupportScheme,
)
from .theory import ocms_mixture_l2, optimal_support_size, scheme_params

# Largest dictionary for which WSS construction is attempted from scratch.
WSS_CONSTRUCTION_CAP = 16

# Row chunk cap for batch samplers, keeps peak memory around tens of MB.
_CHUNK_CELLS = 4_000_000

# below this many total k-subsets the constructor enumerates them all
_WSS_ENUMERATION_CAP = 2048


class ConstructionFailedError(RuntimeError):
    """Scheme construction exhausted its attempt budget."""


def next_prime(n: int) -> int:
    """Smallest prime >= n."""
    if n <= 2:
        return 2
    c = n if n % 2 else n + 1
    while True:
        if all(c % p for p in range(3, math.isqrt(c) + 1, 2)):
            return c
        c += 2


def combination_rank(ids) -> int:
    """Rank of a sorted index set in the combinatorial number system.

    ``rank({x_1 < ... < x_k}) = sum_i C(x_i, i)`` with 1-based ``i``;
    bijective onto ``[0, C(d, k))`` for ``k``-subsets of ``[0, d)``.
    """
    ids = list(ids)
    if not ids or any(b <= a for a, b in zip(ids, ids[1:])) or ids[0] < 0:
        raise ValueError(f"expected strictly increasing nonnegative ids, got {ids}")
    return sum(math.comb(x, i) for i, x in enumerate(ids, start=1))


def combination_unrank(code: int, d: int, k: int) -> tuple[int, ...]:
    """Inverse of ``combination_rank`` for ``k``-subsets of ``[0, d)``."""
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    if not 0 <= code < math.comb(d, k):
        raise ValueError(f"code {code} out of range [0, {math.comb(d, k)})")
    ids = []
    c = d - 1
    rem = code
    for i in range(k, 0, -1):
        while math.comb(c, i) > rem:
            c -= 1
        ids.append(c)
        rem -= math.comb(c, i)
        c -= 1
    return tuple(reversed(ids))


def ss_codes_to_bytes(codes, d: int, k: int) -> bytes:
    """Fixed-width little-endian byte serialization of combination ranks."""
    width = max(1, ((math.comb(d, k) - 1).bit_length() + 7) // 8)
    return b"".join(int(c).to_bytes(width, "little") for c in codes)


def ss_codes_from_bytes(blob: bytes, d: int, k: int) -> list[int]:
    width = max(1, ((math.comb(d, k) - 1).bit_length() + 7) // 8)
    if len(blob) % width:
        raise ValueError("byte stream length is not a multiple of the code width")
    return [int.from_bytes(blob[i : i + width], "little") for i in range(0, len(blob), width)]


def _chunks(n: int, d: int):
    step = max(1, _CHUNK_CELLS // max(d, 1))
    for lo in range(0, n, step):
        yield lo, min(n, lo + step)


@dataclass(frozen=True, eq=False)
class SubsetSelectionScheme:
    """Report a ``k``-subset containing the truth with probability ``p*``."""

    params: SchemeParams

    name = "ss"

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def native_size(self) -> int:
        return self.params.d

    def perturb(self, x: int, rng: np.random.Generator) -> set[int]:
        """One client report: a set of ``k`` value ids."""
        d, k = self.params.d, self.params.k
        if not 0 <= x < d:
            raise ValueError(f"value {x} out of range [0, {d})")
        if rng.random() < self.params.p_star:
            others = rng.choice(d - 1, size=k - 1, replace=False)
            out = {x}
        else:
            others = rng.choice(d - 1, size=k, replace=False)
            out = set()
        out.update(int(o) + (o >= x) for o in others)
        return out

    def perturb_batch(self, values, rng: np.random.Generator) -> np.ndarray:
        """Vectorized reports; returns an ``(n, k)`` array of value ids."""
        d, k = self.params.d, self.params.k
        x = np.asarray(values, dtype=np.int64)
        out = np.empty((x.size, k), dtype=np.int32)
        for lo, hi in _chunks(x.size, d):
            xs = x[lo:hi]
            include = rng.random(xs.size) < self.params.p_star
            scores = rng.random((xs.size, d - 1))
            # After partitioning at k-1, column k-1 holds the largest of the
            # k smallest scores, so the first k-1 columns are a uniform
            # (k-1)-subset and the first k a uniform k-subset.
            sel = np.argpartition(scores, k - 1, axis=1)[:, :k]
            sel += sel >= xs[:, None]
            sel[include, k - 1] = xs[include]
            out[lo:hi] = sel
        return out

    def support_counts(self, subsets) -> SupportCounts:
        s = np.asarray(subsets)
        counts = np.bincount(s.ravel(), minlength=self.d)
        return SupportCounts(counts=counts, n=s.shape[0])

    def estimate(self, counts: SupportCounts) -> np.ndarray:
        from .estimation import estimate_symmetric

        return estimate_symmetric(counts, self.params.p_star, self.params.q_star)

    def run(self, values, rng: np.random.Generator) -> np.ndarray:
        return self.estimate(self.support_counts(self.perturb_batch(values, rng)))

    def encode_response(self, subset) -> int:
        return combination_rank(sorted(int(v) for v in subset))

    def decode_response(self, code: int) -> tuple[int, ...]:
        return combination_unrank(code, self.d, self.params.k)


def ss_new(d: int, budget: PrivacyBudget, k: int | None = None) -> SubsetSelectionScheme:
    """Subset selection at support size ``k`` (default: the L2 minimizer)."""
    if k is None:
        k = optimal_support_size(d, budget)
    return SubsetSelectionScheme(params=scheme_params(d, budget, k))


@dataclass(frozen=True, eq=False)
class OcmsScheme:
    """Count-mean sketch over a prime-extended dictionary.

    A report hashes the value into ``hash_range`` buckets with a freshly
    drawn pairwise-uniform hash ``x -> ((a x + b) mod d') mod B`` and
    sends the randomized-response output of the bucket index along with
    ``(a, b)``.  Bucket sizes differ by one when ``B`` does not divide
    ``d'``, so the scheme is a two-component mixture of constant-support
    configurations: size ``k_hi`` for bucket indices below ``d' mod B``,
    ``k_lo`` otherwise.
    """

    d: int
    d_prime: int
    hash_range: int
    budget: PrivacyBudget
    p_true: float
    collision: float
    p_star: float
    q_star: float
    p_alpha: float
    k_hi: int
    k_lo: int
    _inv: np.ndarray = field(init=False, repr=False)

    name = "ocms"

    def __post_init__(self) -> None:
        inv = np.zeros(self.d_prime, dtype=np.int64)
        for a in range(1, self.d_prime):
            inv[a] = pow(a, -1, self.d_prime)
        inv.flags.writeable = False
        object.__setattr__(self, "_inv", inv)

    @property
    def r(self) -> int:
        """Number of buckets holding ``k_hi`` extended values."""
        return self.d_prime % self.hash_range

    @property
    def native_size(self) -> int:
        return self.d_prime

    def hash_value(self, a, b, x):
        return ((a * x + b) % self.d_prime) % self.hash_range

    def perturb(self, x: int, rng: np.random.Generator) -> tuple[int, int, int]:
        """One report: hash seed pair and randomized bucket index."""
        if not 0 <= x < self.d:
            raise ValueError(f"value {x} out of range [0, {self.d})")
        a = int(rng.integers(1, self.d_prime))
        b = int(rng.integers(0, self.d_prime))
        y = self.hash_value(a, b, x)
        if rng.random() < self.p_true:
            z = y
        else:
            z = (y + int(rng.integers(1, self.hash_range))) % self.hash_range
        return a, b, int(z)

    def perturb_batch(self, values, rng: np.random.Generator):
        x = np.asarray(values, dtype=np.int64)
        n = x.size
        a = rng.integers(1, self.d_prime, size=n)
        b = rng.integers(0, self.d_prime, size=n)
        y = self.hash_value(a, b, x)
        keep = rng.random(n) < self.p_true
        shift = rng.integers(1, self.hash_range, size=n)
        z = np.where(keep, y, (y + shift) % self.hash_range)
        return a, b, z

    def supports(self, response, x: int) -> bool:
        a, b, z = response
        return bool(self.hash_value(a, b, x) == z)

    def pack_response(self, response) -> int:
        a, b, z = (int(v) for v in response)
        if not (1 <= a < self.d_prime and 0 <= b < self.d_prime and 0 <= z < self.hash_range):
            raise ValueError(f"response {response} outside the wire-format ranges")
        return (a * self.d_prime + b) * self.hash_range + z

    def unpack_response(self, code: int) -> tuple[int, int, int]:
        code = int(code)
        if not 0 <= code < self.d_prime * self.d_prime * self.hash_range:
            raise ValueError(f"code {code} out of range")
        ab, z = divmod(code, self.hash_range)
        a, b = divmod(ab, self.d_prime)
        if a == 0:
            raise ValueError(f"code {code} decodes to the degenerate hash seed a=0")
        return a, b, z

    def _bucket_members(self, a, b, z, size: int) -> np.ndarray:
        """All extended values each response supports (bucket preimage)."""
        grid = z[:, None] + self.hash_range * np.arange(size)[None, :]
        return (self._inv[a][:, None] * ((grid - b[:, None]) % self.d_prime)) % self.d_prime

    def support_counts_split(self, responses):
        """Per-value support counts, separately for the two bucket sizes."""
        a, b, z = (np.asarray(v, dtype=np.int64) for v in responses)
        hi = z < self.r
        counts_hi = np.zeros(self.d_prime, dtype=np.int64)
        counts_lo = np.zeros(self.d_prime, dtype=np.int64)
        if self.k_hi > 0 and hi.any():
            members = self._bucket_members(a[hi], b[hi], z[hi], self.k_hi)
            counts_hi = np.bincount(members.ravel(), minlength=self.d_prime)
        lo = ~hi
        if self.k_lo > 0 and lo.any():
            members = self._bucket_members(a[lo], b[lo], z[lo], self.k_lo)
            counts_lo = np.bincount(members.ravel(), minlength=self.d_prime)
        return counts_hi, int(hi.sum()), counts_lo, int(lo.sum())

    def estimate(self, responses) -> np.ndarray:
        """Unbiased estimate over the extended dictionary.

        Each report is reweighted with the support probabilities of its
        own bucket-size configuration, which keeps the estimate summing
        to exactly 1 even though the two configurations mix randomly.
        Empty-bucket reports (only possible when ``B > d'``) carry no
        information and are dropped, renormalizing onto the rest.
        """
        counts_hi, n_hi, counts_lo, n_lo = self.support_counts_split(responses)
        if self.k_lo == 0:
            if n_hi == 0:
                raise ValueError("all responses landed in empty buckets; nothing to estimate")
            p = scheme_params(self.d_prime, self.budget, self.k_hi)
            return (counts_hi / n_hi - p.q_star) / (p.p_star - p.q_star)
        n = n_hi + n_lo
        if n == 0:
            raise ValueError("no responses to estimate from")
        est = np.zeros(self.d_prime)
        if n_hi:
            p = scheme_params(self.d_prime, self.budget, self.k_hi)
            est += (counts_hi - n_hi * p.q_star) / (p.p_star - p.q_star)
        if n_lo:
            p = scheme_params(self.d_prime, self.budget, self.k_lo)
            est += (counts_lo - n_lo * p.q_star) / (p.p_star - p.q_star)
        return est / n

    def run(self, values, rng: np.random.Generator) -> np.ndarray:
        return self.estimate(self.perturb_batch(values, rng))

    def theory_l2(self, n: int, mode: EstimationMode) -> float:
        return ocms_mixture_l2(self.d, self.d_prime, self.hash_range, self.budget, n, mode)

    def to_support_scheme(self) -> SupportScheme:
        """Explicit row-per-response form; only sensible for small ``d'``."""
        dp, bb = self.d_prime, self.hash_range
        if dp * (dp - 1) * bb > 200_000:
            raise ValueError("extended dictionary too large for an explicit support matrix")
        a = np.repeat(np.arange(1, dp), dp * bb)
        b = np.tile(np.repeat(np.arange(dp), bb), dp - 1)
        z = np.tile(np.arange(bb), dp * (dp - 1))
        support = self.hash_value(a[:, None], b[:, None], np.arange(dp)[None, :]) == z[:, None]
        base = np.full(a.size, 1.0 / ((self.budget.e_eps + bb - 1.0) * dp * (dp - 1)))
        return SupportScheme(
            support=support.astype(np.uint8), base_prob=base, budget=self.budget
        )


def ocms_new(d: int, budget: PrivacyBudget) -> OcmsScheme:
    """Sketch parameters for dictionary size ``d``.

    The dictionary extends to the next prime ``d'`` (so affine hash seeds
    form a pairwise-uniform family) and the bucket count is
    ``round(1 + e^eps)``, rounding half up.  ``collision`` is the exact
    probability that two distinct extended values share a bucket.
    """
    if d < 2:
        raise ValueError(f"dictionary size must be >= 2, got {d}")
    e = budget.e_eps
    d_prime = next_prime(d)
    hash_range = int(math.floor(e + 1.5))
    k_lo, r = divmod(d_prime, hash_range)
    k_hi = k_lo + 1
    p_true = e / (e + hash_range - 1.0)
    collision = (
        r * k_hi * (k_hi - 1) + (hash_range - r) * k_lo * (k_lo - 1)
    ) / (d_prime * (d_prime - 1))
    q_star = p_true * collision + (1.0 - p_true) * (1.0 - collision) / (hash_range - 1.0)
    return OcmsScheme(
        d=d,
        d_prime=d_prime,
        hash_range=hash_range,
        budget=budget,
        p_true=p_true,
        collision=collision,
        p_star=p_true,
        q_star=q_star,
        p_alpha=r / hash_range,
        k_hi=k_hi,
        k_lo=k_lo,
    )


@dataclass(frozen=True, eq=False)
class WssScheme:
    """A constructed support scheme with its sampling tables."""

    scheme: SupportScheme
    params: SchemeParams
    attempts: int
    residual: float
    _cum: np.ndarray = field(init=False, repr=False)

    name = "wss"

    def __post_init__(self) -> None:
        s = self.scheme.support.astype(np.float64)
        weights = self.scheme.base_prob[:, None] * (
            1.0 + (self.scheme.budget.e_eps - 1.0) * s
        )
        totals = weights.sum(axis=0)
        if np.any(np.abs(totals - 1.0) > 1e-9):
            raise ValueError("per-value sampling weights do not total 1")
        cum = np.cumsum(weights / totals, axis=0).T  # (d, n_responses)
        cum.flags.writeable = False
        object.__setattr__(self, "_cum", cum)

    @property
    def d(self) -> int:
        return self.scheme.d

    @property
    def native_size(self) -> int:
        return self.scheme.d

    @property
    def response_count(self) -> int:
        return self.scheme.n_responses

    def perturb(self, x: int, rng: np.random.Generator) -> int:
        if not 0 <= x < self.d:
            raise ValueError(f"value {x} out of range [0, {self.d})")
        idx = int(np.searchsorted(self._cum[x], rng.random()))
        return min(idx, self.response_count - 1)

    def perturb_batch(self, values, rng: np.random.Generator) -> np.ndarray:
        x = np.asarray(values, dtype=np.int64)
        u = rng.random(x.size)
        idx = (self._cum[x] < u[:, None]).sum(axis=1)
        return np.minimum(idx, self.response_count - 1)

    def support_counts(self, responses) -> SupportCounts:
        hist = np.bincount(np.asarray(responses), minlength=self.response_count)
        counts = (hist @ self.scheme.support.astype(np.int64)).astype(np.int64)
        return SupportCounts(counts=counts, n=int(hist.sum()))

    def estimate(self, counts: SupportCounts) -> np.ndarray:
        from .estimation import estimate_symmetric

        return estimate_symmetric(counts, self.params.p_star, self.params.q_star)

    def run(self, values, rng: np.random.Generator) -> np.ndarray:
        return self.estimate(self.support_counts(self.perturb_batch(values, rng)))


def _pairwise_check(scheme: SupportScheme, params: SchemeParams, tol: float) -> float:
    """Largest deviation of measured support probabilities from target."""
    s = scheme.support.astype(np.float64)
    e = scheme.budget.e_eps
    mass = scheme.base_prob @ s
    pair = (e - 1.0) * (s * scheme.base_prob[:, None]).T @ s + mass[None, :]
    dev_self = np.abs(e * mass - params.p_star).max()
    off = ~np.eye(scheme.d, dtype=bool)
    dev_pair = np.abs(pair[off] - params.q_star).max()
    return float(max(dev_self, dev_pair))


def wss_construct(
    d: int,
    budget: PrivacyBudget,
    k: int | None = None,
    rng: np.random.Generator | None = None,
    max_attempts: int = 20,
    n_candidates: int | None = None,
    residual_tol: float = 1e-9,
    prune_tol: float = 1e-12,
) -> WssScheme:
    """Search for a compact scheme matching the optimal support probabilities.

    When there are at most a couple thousand ``k``-subsets in total (and
    ``n_candidates`` was not forced), all of them are offered to the
    solver at once -- deterministic, and the complete set always admits
    an exact solution.  Otherwise candidate subsets are sampled with
    weights favouring values not yet covered (``exp`` of minus the
    current per-value candidate count), widening the net on each retry.
    Base probabilities then come from nonnegative least squares on the
    pairwise-support constraints.  An attempt is accepted only when the
    fit is exact to ``residual_tol``, pruning leaves at most
    ``d(d-1)/2 + 1`` rows, and the resulting scheme reproduces the target
    probabilities to 1e-8.  Anything else triggers a fresh sample -- rows
    are never truncated to force the bound.
    """
    if rng is None:
        rng = np.random.default_rng()
    if k is None:
        k = optimal_support_size(d, budget)
    params = scheme_params(d, budget, k)
    if k == 1:
        scheme = SupportScheme(
            support=np.eye(d, dtype=np.uint8),
            base_prob=np.full(d, 1.0 / (budget.e_eps - 1.0 + d)),
            budget=budget,
        )
        return WssScheme(scheme=scheme, params=params, attempts=1, residual=0.0)

    exhaustive = n_candidates is None and math.comb(d, k) <= _WSS_ENUMERATION_CAP
    if n_candidates is None:
        n_candidates = d * d
    max_rows = d * (d - 1) // 2 + 1
    target = k * (k - 1.0) / ((k * (budget.e_eps - 1.0) + d) * (d - 1.0))
    iu, ju = np.triu_indices(d, 1)
    failures: list[str] = []
    for attempt in range(1, max_attempts + 1):
        if exhaustive and attempt > 1:
            break  # identical candidates every attempt; one failure is final
        if exhaustive:
            cand = np.zeros((math.comb(d, k), d), dtype=np.uint8)
            for row, ids in enumerate(itertools.combinations(range(d), k)):
                cand[row, list(ids)] = 1
        else:
            coverage = np.zeros(d)
            seen: dict[tuple[int, ...], None] = {}
            for _ in range(n_candidates * attempt):
                w = np.exp(-(coverage - coverage.min()))
                ids = rng.choice(d, size=k, replace=False, p=w / w.sum())
                coverage[ids] += 1.0
                seen.setdefault(tuple(sorted(int(v) for v in ids)))
            cand = np.zeros((len(seen), d), dtype=np.uint8)
            for row, ids in enumerate(seen):
                cand[row, list(ids)] = 1
        a = (cand[:, iu] * cand[:, ju]).T.astype(np.float64)
        y = np.full(iu.size, target)
        try:
            fit = nnls(a, y)
        except IterationLimitError:
            failures.append(f"attempt {attempt}: NNLS iteration limit")
            continue
        if fit.residual > residual_tol:
            failures.append(f"attempt {attempt}: residual {fit.residual:.3e}")
            continue
        keep = fit.x > prune_tol
        if int(keep.sum()) > max_rows:
            failures.append(f"attempt {attempt}: {int(keep.sum())} rows exceed bound {max_rows}")
            continue
        try:
            scheme = SupportScheme(
                support=cand[keep], base_prob=fit.x[keep], budget=budget
            )
        except ValueError as exc:
            failures.append(f"attempt {attempt}: {exc}")
            continue
        if _pairwise_check(scheme, params, 1e-8) > 1e-8:
            failures.append(f"attempt {attempt}: support probabilities off target")
            continue
        return WssScheme(
            scheme=scheme, params=params, attempts=attempt, residual=fit.residual
        )
    raise ConstructionFailedError(
        f"no valid scheme for d={d}, k={k} in {max_attempts} attempts: "
        + "; ".join(failures[-3:])
    )


def perturb_from_matrix(matrix, x: int, rng: np.random.Generator) -> int:
    """Sample a response row index from column ``x`` of a perturbation matrix."""
    from .model import perturbation_matrix

    p = perturbation_matrix(matrix)
    if not 0 <= x < p.shape[1]:
        raise ValueError(f"value {x} out of range [0, {p.shape[1]})")
    cum = np.cumsum(p[:, x])
    return min(int(np.searchsorted(cum, rng.random())), p.shape[0] - 1)


class MatrixMechanism:
    """Generic perturber driven by an explicit column-stochastic matrix.

    Pairs the matrix with its variance-optimal linear reconstruction, so
    any hand-specified scheme can run through the same benchmark path as
    the built-in mechanisms.  Estimates are generally not guaranteed to
    sum to 1.
    """

    name = "matrix-file"

    def __init__(self, matrix) -> None:
        from .estimation import optimal_reconstruction
        from .model import perturbation_matrix

        self.matrix = perturbation_matrix(matrix)
        self.reconstruction = optimal_reconstruction(self.matrix)
        cum = np.cumsum(self.matrix, axis=0).T.copy()  # (d, m) row per input
        cum.flags.writeable = False
        self._cum = cum

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    @property
    def native_size(self) -> int:
        return self.d

    def perturb(self, x: int, rng: np.random.Generator) -> int:
        return perturb_from_matrix(self.matrix, x, rng)

    def perturb_batch(self, values, rng: np.random.Generator) -> np.ndarray:
        x = np.asarray(values, dtype=np.int64)
        m = self.matrix.shape[0]
        out = np.empty(x.size, dtype=np.int64)
        for lo, hi in _chunks(x.size, m):
            u = rng.random(hi - lo)
            idx = (self._cum[x[lo:hi]] < u[:, None]).sum(axis=1)
            out[lo:hi] = np.minimum(idx, m - 1)
        return out

    def estimate(self, responses) -> np.ndarray:
        from .estimation import linear_estimate

        resp = np.asarray(responses, dtype=np.int64)
        if resp.size == 0:
            raise ValueError("no responses to estimate from")
        hist = np.bincount(resp, minlength=self.matrix.shape[0])
        return linear_estimate(self.reconstruction, hist / resp.size)

    def run(self, values, rng: np.random.Generator) -> np.ndarray:
        return self.estimate(self.perturb_batch(values, rng))
