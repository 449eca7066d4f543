"""Brute-force and Monte Carlo cross-checks for the closed forms.

Nothing here is needed to deploy a mechanism; these routines exist so
every formula in :mod:`ldpfreq.theory` can be validated against an
independent computation: explicit enumeration of full subset schemes,
exhaustive permutation averaging, a census of the affine hash family,
and seeded Monte Carlo loss measurement.  The CLI exposes the same
checks under ``ldpfreq verify``.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimation import empirical_losses, optimal_reconstruction
from .linalg import nnls
from .model import (
    EstimationMode,
    PrivacyBudget,
    SchemeParams,
    SupportScheme,
    frequency_vector,
    largest_remainder_composition,
)
from .theory import reconstruction_trace, scheme_params

_PERMUTATION_CAP = 6  # d! enumeration beyond this is pointless


def full_subset_scheme(d: int, k: int, budget: PrivacyBudget) -> SupportScheme:
    """The maximal symmetric scheme: every k-subset, one shared base probability.

    ``p_o = d / (C(d, k) (k (e^eps - 1) + d))`` balances the column
    identity exactly.
    """
    if not 1 <= k <= d - 1:
        raise ValueError(f"support size must lie in [1, d-1], got {k}")
    rows = list(itertools.combinations(range(d), k))
    support = np.zeros((len(rows), d), dtype=np.uint8)
    for o, ids in enumerate(rows):
        support[o, list(ids)] = 1
    base = np.full(len(rows), d / (len(rows) * (k * (budget.e_eps - 1.0) + d)))
    return SupportScheme(support=support, base_prob=base, budget=budget)


@dataclass(frozen=True)
class SymmetryReport:
    measured_p_star: float
    measured_q_star: float
    max_self_deviation: float
    max_pair_deviation: float
    ok: bool


def verify_symmetric(
    scheme: SupportScheme, params: SchemeParams | None = None, tol: float = 1e-9
) -> SymmetryReport:
    """Measure the scheme's actual support probabilities exhaustively.

    Self-support per value is ``e^eps * sum_o S[o, x] p_o``; the
    cross-support for an ordered pair adds the chance of joint support.
    Deviations are taken against ``params`` when given, otherwise
    against the measured means (pure constancy check).
    """
    s = scheme.support.astype(np.float64)
    e = scheme.budget.e_eps
    mass = scheme.base_prob @ s
    self_probs = e * mass
    pair = (e - 1.0) * (s * scheme.base_prob[:, None]).T @ s + mass[None, :]
    off = ~np.eye(scheme.d, dtype=bool)
    p_ref = params.p_star if params is not None else float(self_probs.mean())
    q_ref = params.q_star if params is not None else float(pair[off].mean())
    dev_self = float(np.abs(self_probs - p_ref).max())
    dev_pair = float(np.abs(pair[off] - q_ref).max())
    return SymmetryReport(
        measured_p_star=float(self_probs.mean()),
        measured_q_star=float(pair[off].mean()),
        max_self_deviation=dev_self,
        max_pair_deviation=dev_pair,
        ok=max(dev_self, dev_pair) <= tol,
    )


def permutation_average(matrix) -> tuple[np.ndarray, float, float]:
    """Average ``Z^T A Z`` over every permutation ``Z`` of the dictionary.

    The result always has the two-parameter form ``(a-b) I + b J``
    with ``a`` the mean diagonal and ``b`` the mean off-diagonal entry.
    """
    a = np.asarray(matrix, dtype=np.float64)
    d = a.shape[0]
    if a.shape != (d, d):
        raise ValueError("expected a square matrix")
    if d > _PERMUTATION_CAP:
        raise ValueError(f"exhaustive averaging capped at d={_PERMUTATION_CAP}")
    acc = np.zeros_like(a)
    for perm in itertools.permutations(range(d)):
        p = np.asarray(perm)
        acc += a[np.ix_(p, p)]
    acc /= math.factorial(d)
    diag_mean = float(np.trace(acc) / d)
    off_mean = float((acc.sum() - np.trace(acc)) / (d * (d - 1)))
    return acc, diag_mean, off_mean


@dataclass(frozen=True, eq=False)
class UrpReport:
    variance: np.ndarray
    alpha: float
    beta: float


def urp_exact_variance(
    matrix,
    reconstruction,
    truth,
    n: int,
    mode: EstimationMode = EstimationMode.FREQUENCY,
) -> UrpReport:
    """Exact variance of the permutation-symmetrized linear estimator.

    Averages the per-coordinate variance over all ``d!`` relabelings of
    the dictionary; ``alpha`` and ``beta`` are the mean diagonal and
    off-diagonal entries of ``(Q o Q) P``, so the frequency-mode result
    equals ``(alpha - beta - 1) f + beta`` per coordinate (all over n).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    p = np.asarray(matrix, dtype=np.float64)
    q = np.asarray(reconstruction, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    m = (q * q) @ p
    avg, alpha, beta = permutation_average(m)
    if mode is EstimationMode.FREQUENCY:
        var = (avg @ t - t) / n
    else:
        var = (avg @ t - t * t) / n
    return UrpReport(variance=var, alpha=alpha, beta=beta)


@dataclass(frozen=True, eq=False)
class CensusReport:
    bucket_sizes: np.ndarray
    collision_count: int
    collision: float
    pairwise_uniform: bool
    collision_constant: bool


def hash_family_census(d_prime: int, hash_range: int) -> CensusReport:
    """Exhaustively enumerate the affine hash family ``((a x + b) % d') % B``.

    Checks, for every ordered input pair, that the pre-bucket layer hits
    every ordered output pair exactly once, and that the bucket-collision
    count is the same for all pairs.  Feasible for small ``d'`` only.
    """
    if next_prime_check := [p for p in range(2, d_prime) if d_prime % p == 0]:
        raise ValueError(f"{d_prime} is not prime (divisible by {next_prime_check[0]})")
    if hash_range < 2:
        raise ValueError("hash range must be >= 2")
    if d_prime > 64:
        raise ValueError("census is exhaustive; keep d_prime <= 64")
    a = np.repeat(np.arange(1, d_prime), d_prime)
    b = np.tile(np.arange(d_prime), d_prime - 1)
    full = (a[:, None] * np.arange(d_prime)[None, :] + b[:, None]) % d_prime
    buckets = full % hash_range
    sizes = np.bincount(np.arange(d_prime) % hash_range, minlength=hash_range)

    pairwise = True
    expected = set(
        y1 * d_prime + y2 for y1 in range(d_prime) for y2 in range(d_prime) if y1 != y2
    )
    counts = []
    for x1 in range(d_prime):
        for x2 in range(d_prime):
            if x1 == x2:
                continue
            codes = full[:, x1] * d_prime + full[:, x2]
            if set(codes.tolist()) != expected or np.unique(codes).size != codes.size:
                pairwise = False
            counts.append(int((buckets[:, x1] == buckets[:, x2]).sum()))
    constant = len(set(counts)) == 1
    count = counts[0]
    return CensusReport(
        bucket_sizes=sizes,
        collision_count=count,
        collision=count / (d_prime * (d_prime - 1)),
        pairwise_uniform=pairwise,
        collision_constant=constant,
    )


def _entropy(seed, *extra: int) -> list[int]:
    if isinstance(seed, (tuple, list)):
        parts = [int(v) for v in seed]
    else:
        parts = [int(seed)]
    if any(v < 0 for v in parts):
        raise ValueError("seed components must be nonnegative")
    return parts + [int(v) for v in extra]


def run_stream(seed, run_index: int) -> np.random.Generator:
    """The RNG stream for one Monte Carlo run.

    Streams are derived counter-style from ``(seed..., run_index)``, so
    results do not depend on how runs are split across workers.
    """
    return np.random.default_rng(np.random.SeedSequence(_entropy(seed, run_index)))


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    mean_l1: float
    mean_l2: float
    std_l2: float
    per_run_l1: np.ndarray
    per_run_l2: np.ndarray
    estimate_sums: np.ndarray
    estimates: np.ndarray
    truth: np.ndarray
    n: int
    runs: int
    mode: EstimationMode


def _mc_runs(mechanism, truth, values, n, mode, seed, run_ids, d):
    l1 = np.zeros(len(run_ids))
    l2 = np.zeros(len(run_ids))
    sums = np.zeros(len(run_ids))
    ests = np.zeros((len(run_ids), d))
    for i, r in enumerate(run_ids):
        rng = run_stream(seed, r)
        if mode is EstimationMode.DISTRIBUTION:
            values = rng.choice(d, size=n, p=truth)
        est = mechanism.run(values, rng)
        sums[i] = float(est.sum())
        ests[i] = est[:d]
        l1[i], l2[i] = empirical_losses(est[:d], truth)
    return l1, l2, sums, ests


def monte_carlo_loss(
    mechanism,
    truth,
    n: int,
    runs: int,
    seed,
    mode: EstimationMode = EstimationMode.FREQUENCY,
    threads: int | None = None,
) -> MonteCarloResult:
    """Measure estimator losses over seeded repetitions.

    Frequency mode perturbs the same dataset every run -- the composition
    of ``n * truth`` under largest-remainder rounding -- and scores
    against that composition.  Distribution mode draws ``n`` i.i.d.
    values per run and scores against ``truth`` itself.  Worker count
    comes from ``LDPFREQ_THREADS`` unless passed explicitly; the split
    never changes the results.
    """
    if runs < 1 or n < 1:
        raise ValueError("need runs >= 1 and n >= 1")
    truth = frequency_vector(truth)
    d = truth.size
    if d != mechanism.d:
        raise ValueError(f"truth has {d} values but mechanism expects {mechanism.d}")
    values = None
    if mode is EstimationMode.FREQUENCY:
        comp = largest_remainder_composition(truth, n)
        values = np.repeat(np.arange(d), comp)
        truth = comp / n
    if threads is None:
        threads = int(os.environ.get("LDPFREQ_THREADS", "1") or "1")

    all_ids = list(range(runs))
    if threads > 1 and runs > 1:
        chunks = [all_ids[i::threads] for i in range(threads) if all_ids[i::threads]]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(
                pool.map(
                    _mc_chunk_star,
                    [(mechanism, truth, values, n, mode, seed, ids, d) for ids in chunks],
                )
            )
        l1 = np.zeros(runs)
        l2 = np.zeros(runs)
        sums = np.zeros(runs)
        ests = np.zeros((runs, d))
        for ids, (c1, c2, cs, ce) in zip(chunks, parts):
            l1[ids], l2[ids], sums[ids], ests[ids] = c1, c2, cs, ce
    else:
        l1, l2, sums, ests = _mc_runs(mechanism, truth, values, n, mode, seed, all_ids, d)

    return MonteCarloResult(
        mean_l1=float(l1.mean()),
        mean_l2=float(l2.mean()),
        std_l2=float(l2.std(ddof=1)) if runs > 1 else 0.0,
        per_run_l1=l1,
        per_run_l2=l2,
        estimate_sums=sums,
        estimates=ests,
        truth=truth,
        n=n,
        runs=runs,
        mode=mode,
    )


def _mc_chunk_star(args):
    return _mc_runs(*args)


def random_extremal_scheme(
    d: int,
    budget: PrivacyBudget,
    rng: np.random.Generator,
    extra_rows: int | None = None,
    max_tries: int = 50,
) -> SupportScheme:
    """A random scheme with exact likelihood ratio ``e^eps`` on every row.

    Draws response rows with random support sizes and solves for
    nonnegative base probabilities meeting the total-probability
    identity, then blends the result with a randomized-response core
    (the ``d`` singleton rows) at a random weight.  The core keeps the
    perturbation matrix full column rank -- solutions of the identity
    alone can collapse onto as few as two complementary rows -- while
    support sizes still vary across rows, unlike the hand-built schemes.
    """
    if extra_rows is None:
        extra_rows = 2 * d
    identity = np.eye(d, dtype=np.uint8)
    rr_prob = 1.0 / (budget.e_eps - 1.0 + d)
    for _ in range(max_tries):
        rows = []
        for _ in range(extra_rows):
            size = int(rng.integers(1, d))
            row = np.zeros(d, dtype=np.uint8)
            row[rng.choice(d, size=size, replace=False)] = 1
            rows.append(row)
        support = np.unique(np.asarray(rows, dtype=np.uint8), axis=0)
        a = (budget.e_eps - 1.0) * support.T.astype(np.float64) + 1.0
        fit = nnls(a, np.ones(d))
        keep = fit.x > 1e-12
        if fit.residual > 1e-10 or not keep.any():
            continue
        weight = float(rng.uniform(0.2, 0.8))
        return SupportScheme(
            support=np.vstack([identity, support[keep]]),
            base_prob=np.concatenate(
                [np.full(d, weight * rr_prob), (1.0 - weight) * fit.x[keep]]
            ),
            budget=budget,
        )
    raise RuntimeError(f"could not draw a valid random scheme for d={d}")


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    ok: bool
    detail: str


def _check(suite, name, ok, detail) -> CheckResult:
    return CheckResult(suite=suite, name=name, ok=bool(ok), detail=detail)


def _suite_symmetry() -> list[CheckResult]:
    out = []
    for d in (4, 5, 6):
        for k in (1, 2, 3):
            scheme = full_subset_scheme(d, k, PrivacyBudget(1.0))
            rep = verify_symmetric(scheme, scheme_params(d, PrivacyBudget(1.0), k), tol=1e-12)
            out.append(
                _check(
                    "symmetry",
                    f"full-subset d={d} k={k}",
                    rep.ok,
                    f"max deviation {max(rep.max_self_deviation, rep.max_pair_deviation):.2e}",
                )
            )
    return out


def _suite_hash_census() -> list[CheckResult]:
    out = []
    for d_prime, b in ((5, 2), (7, 4), (11, 4), (13, 4)):
        rep = hash_family_census(d_prime, b)
        k_lo, r = divmod(d_prime, b)
        expected = r * (k_lo + 1) * k_lo + (b - r) * k_lo * (k_lo - 1)
        ok = rep.pairwise_uniform and rep.collision_constant and rep.collision_count == expected
        out.append(
            _check(
                "hash-census",
                f"d'={d_prime} B={b}",
                ok,
                f"collision count {rep.collision_count} (expected {expected})",
            )
        )
    return out


def _suite_fisher(seed: int = 7) -> list[CheckResult]:
    out = []
    budget = PrivacyBudget(math.log(3.0))
    p = budget.e_eps / (1.0 + budget.e_eps)
    rr = np.array([[p, 1.0 - p], [1.0 - p, p]])
    from .theory import fisher_lower_bound

    bound = fisher_lower_bound(rr, np.array([0.5, 0.5]), 1)
    closed = (budget.e_eps**2 + 1.0) / (budget.e_eps - 1.0) ** 2 - 0.5
    out.append(
        _check(
            "fisher",
            "binary randomized response",
            abs(bound.l2_lb - closed) <= 1e-12,
            f"l2 bound {bound.l2_lb:.12f} vs closed form {closed:.12f}",
        )
    )
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(20):
        d = int(rng.integers(3, 7))
        scheme = random_extremal_scheme(d, PrivacyBudget(float(rng.uniform(0.5, 2.0))), rng)
        pm = scheme.to_perturbation_matrix()
        lb = fisher_lower_bound(pm, np.full(d, 1.0 / d), 1)
        worst = max(worst, abs(lb.l2_lb + 1.0 / d - reconstruction_trace(pm)))
    out.append(
        _check(
            "fisher",
            "uniform-truth trace identity (20 random schemes)",
            worst <= 1e-9,
            f"max |n*l2_lb + 1/d - trace| = {worst:.2e}",
        )
    )
    return out


def _suite_urp(seed: int = 11) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        scheme = random_extremal_scheme(4, PrivacyBudget(1.0), rng)
        pm = scheme.to_perturbation_matrix()
        q = optimal_reconstruction(pm)
        f = rng.dirichlet(np.ones(4))
        rep = urp_exact_variance(pm, q, f, 1)
        predicted = (rep.alpha - rep.beta - 1.0) * f + rep.beta
        worst = max(worst, float(np.abs(rep.variance - predicted).max()))
    return [
        _check(
            "urp",
            "permutation average matches two-parameter form (d=4)",
            worst <= 1e-10,
            f"max deviation {worst:.2e}",
        )
    ]


def _suite_ocms_mixture(seed: int = 13) -> list[CheckResult]:
    from .mechanisms import ocms_new
    from .theory import ocms_mixture_l2

    out = []
    budget = PrivacyBudget(1.0)
    mech = ocms_new(100, budget)
    rng = np.random.default_rng(seed)
    _, _, z = mech.perturb_batch(np.zeros(100_000, dtype=np.int64), rng)
    share = float((z < mech.r).mean())
    out.append(
        _check(
            "ocms-mixture",
            "share of large-bucket responses",
            abs(share - mech.p_alpha) <= 0.01,
            f"measured {share:.4f} vs p_alpha {mech.p_alpha:.4f}",
        )
    )
    trials = 20_000
    ests = np.zeros((trials, mech.d))
    values = np.zeros(1, dtype=np.int64)
    for t in range(trials):
        ests[t] = mech.run(values, run_stream(seed + 1, t))[: mech.d]
    mc_l2 = float(ests.var(axis=0, ddof=1).sum())
    closed = ocms_mixture_l2(mech.d, mech.d_prime, mech.hash_range, budget, 1)
    out.append(
        _check(
            "ocms-mixture",
            f"mixture variance vs {trials} Monte Carlo trials",
            abs(mc_l2 / closed - 1.0) <= 0.03,
            f"monte carlo {mc_l2:.4f} vs closed form {closed:.4f}",
        )
    )
    return out


def _suite_wss(seed: int = 17) -> list[CheckResult]:
    from .mechanisms import wss_construct

    rng = np.random.default_rng(seed)
    mech = wss_construct(6, PrivacyBudget(1.0), rng=rng)
    rep = verify_symmetric(mech.scheme, mech.params, tol=1e-8)
    bound = 6 * 5 // 2 + 1
    return [
        _check(
            "wss",
            f"construction d=6 (k={mech.params.k})",
            rep.ok and mech.response_count <= bound,
            f"{mech.response_count} responses (bound {bound}), "
            f"max deviation {max(rep.max_self_deviation, rep.max_pair_deviation):.2e}",
        )
    ]


_SUITES = {
    "symmetry": _suite_symmetry,
    "hash-census": _suite_hash_census,
    "fisher": _suite_fisher,
    "urp": _suite_urp,
    "ocms-mixture": _suite_ocms_mixture,
    "wss": _suite_wss,
}


def run_suite(name: str) -> list[CheckResult]:
    """Run one named verification suite (or ``all``)."""
    if name == "all":
        results = []
        for key in _SUITES:
            results.extend(_SUITES[key]())
        return results
    if name not in _SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(_SUITES)} or 'all'")
    return _SUITES[name]()
