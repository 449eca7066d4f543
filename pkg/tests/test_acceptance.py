"""End-to-end acceptance checks.

Each test is one gate: closed-form identities at tight tolerance,
brute-force oracles against the implementations, and fixed-seed Monte
Carlo runs against the loss formulas.  Stochastic gates pin their seeds;
the tolerances leave several standard errors of headroom at those seeds.
"""

import itertools
import math
import time

import numpy as np
import pytest

from ldpfreq.estimation import linear_variance, optimal_reconstruction
from ldpfreq.harness import MECHANISM_IDS, _float_bits, zipf_distribution
from ldpfreq.mechanisms import (
    combination_rank,
    combination_unrank,
    ocms_new,
    ss_new,
    wss_construct,
)
from ldpfreq.model import EstimationMode, PrivacyBudget, validate_ldp
from ldpfreq.oracle import (
    full_subset_scheme,
    hash_family_census,
    monte_carlo_loss,
    random_extremal_scheme,
    run_stream,
    urp_exact_variance,
    verify_symmetric,
)
from ldpfreq.theory import (
    fisher_lower_bound,
    l1_from_l2,
    l2_of_k,
    l2_star,
    ocms_deviation_factors,
    ocms_mixture_l2,
    optimal_support_size,
    osc_variance,
    reconstruction_trace,
    scheme_params,
    sym_variance,
)

FREQ = EstimationMode.FREQUENCY
DIST = EstimationMode.DISTRIBUTION

N_BENCH = 10_000
RUNS_BENCH = 100
BENCH_SEED = 1
BENCH_EPSILONS = (0.5, 1.0, 2.0, 3.0)


def _cell_seed(seed: int, name: str, eps: float) -> tuple:
    return (seed, MECHANISM_IDS[name], _float_bits(eps))


@pytest.fixture(scope="module")
def bench_d100():
    """Fixed-seed benchmark shared by the loss and unbiasedness gates."""
    truth = zipf_distribution(100)
    cells = {}
    start = time.perf_counter()
    for eps in BENCH_EPSILONS:
        budget = PrivacyBudget(eps)
        for name, mech in (("ss", ss_new(100, budget)), ("ocms", ocms_new(100, budget))):
            cells[name, eps] = monte_carlo_loss(
                mech,
                truth,
                N_BENCH,
                RUNS_BENCH,
                seed=_cell_seed(BENCH_SEED, name, eps),
                mode=DIST,
            )
    return cells, truth, time.perf_counter() - start


def test_01_closed_form_self_consistency():
    start = time.perf_counter()
    for d in range(2, 13):
        for eps in (0.5, 1.0, 2.0):
            budget = PrivacyBudget(eps)
            for k in range(1, d):
                summed = d * osc_variance(1.0 / d, d, budget, k, 1000)
                assert abs(summed - l2_of_k(d, budget, 1000, k)) < 1e-10
                sp = scheme_params(d, budget, k)
                for f in (0.0, 1.0 / d, 0.63, 1.0):
                    composed = osc_variance(f, d, budget, k, 1000)
                    direct = sym_variance(sp.p_star, sp.q_star, f, 1000)
                    assert abs(composed - direct) < 1e-12
    assert time.perf_counter() - start < 1.0


def test_02_full_subset_scheme_reproduces_target_probabilities():
    start = time.perf_counter()
    for d in (4, 5, 6):
        for k in (1, 2, 3):
            budget = PrivacyBudget(1.0)
            report = verify_symmetric(
                full_subset_scheme(d, k, budget), scheme_params(d, budget, k), tol=1e-12
            )
            assert report.ok, f"d={d}, k={k}: {report}"
            assert report.max_self_deviation <= 1e-12
            assert report.max_pair_deviation <= 1e-12
    assert time.perf_counter() - start < 1.0


def test_03_strict_bound_value_and_branch_agreement():
    budget = PrivacyBudget(math.log(3.0))
    assert l2_star(4, budget, 1000) == pytest.approx(0.006, abs=1e-12)
    # d = e^eps + 1 sits exactly on the branch boundary; the deployable
    # k = 1 scheme and both real-k closed forms must all agree there
    assert optimal_support_size(4, budget) == 1
    assert l2_of_k(4, budget, 1000, 1) == pytest.approx(0.006, abs=1e-12)
    assert l2_star(4, budget, 1000, integer_k=False) == pytest.approx(0.006, abs=1e-12)
    assert l2_star(4, budget, 1000, DIST) == pytest.approx(0.006 + 0.00075, abs=1e-12)


def test_04_fisher_floor_and_trace_identity():
    start = time.perf_counter()
    e = 3.0
    p_rr = np.array([[e, 1.0], [1.0, e]]) / (e + 1.0)
    for n in (1, 1000):
        fb = fisher_lower_bound(p_rr, np.array([0.5, 0.5]), n)
        assert fb.l2_lb == pytest.approx(2.0 / n, abs=1e-12)

    rng = np.random.default_rng(23)
    for _ in range(50):
        d = int(rng.integers(2, 7))
        m = int(rng.integers(d, 13))
        raw = rng.random((m, d)) + 0.05
        raw[:d] += 2.0 * np.eye(d)  # keep the information matrix well conditioned
        p = raw / raw.sum(axis=0)
        theta = np.full(d, 1.0 / d)
        fb = fisher_lower_bound(p, theta, 1)
        assert abs(fb.l2_lb + 1.0 / d - reconstruction_trace(p)) < 1e-9
    assert time.perf_counter() - start < 5.0


def test_05_relabel_averaged_variance_has_affine_form():
    start = time.perf_counter()
    budget = PrivacyBudget(1.0)
    rng = np.random.default_rng(31)
    for _ in range(20):
        scheme = random_extremal_scheme(4, budget, rng)
        p = scheme.to_perturbation_matrix()
        q = optimal_reconstruction(p)
        m = (q * q) @ p
        alpha = float(np.trace(m)) / 4.0
        beta = float(m.sum() - np.trace(m)) / 12.0
        truth = rng.dirichlet(np.ones(4))
        rep = urp_exact_variance(p, q, truth, 100)
        assert rep.alpha == pytest.approx(alpha, abs=1e-12)
        assert rep.beta == pytest.approx(beta, abs=1e-12)
        closed = ((alpha - beta - 1.0) * truth + beta) / 100
        np.testing.assert_allclose(rep.variance, closed, atol=1e-10)
    assert time.perf_counter() - start < 10.0


def test_06_measured_losses_match_theory_at_d100(bench_d100):
    cells, truth, elapsed = bench_d100
    assert elapsed < 120.0
    for (name, eps), res in cells.items():
        budget = PrivacyBudget(eps)
        if name == "ss":
            k = optimal_support_size(100, budget)
            l2_theory = l2_of_k(100, budget, N_BENCH, k, DIST)
        else:
            mech = ocms_new(100, budget)
            l2_theory = ocms_mixture_l2(
                100, mech.d_prime, mech.hash_range, budget, N_BENCH, DIST
            )
        l1_theory = l1_from_l2(l2_theory, 100)
        assert abs(res.mean_l2 / l2_theory - 1.0) < 0.05, (name, eps)
        assert abs(res.mean_l1 / l1_theory - 1.0) < 0.05, (name, eps)


def test_07_sketch_near_optimality_constant():
    excess = ocms_deviation_factors(100, 101, PrivacyBudget(1.0)).product_excess
    assert 0.0008 <= excess <= 0.0010


def test_08_weighted_subset_construction_at_d8():
    start = time.perf_counter()
    budget = PrivacyBudget(1.0)
    k = optimal_support_size(8, budget)
    rng = run_stream(_cell_seed(1, "wss", 1.0), RUNS_BENCH)
    mech = wss_construct(8, budget, k=k, rng=rng)
    assert mech.attempts <= 20
    assert mech.response_count <= 8 * 7 // 2 + 1
    report = verify_symmetric(mech.scheme, mech.params, tol=1e-8)
    assert report.ok
    assert validate_ldp(mech.scheme.to_perturbation_matrix(), budget).valid

    res = monte_carlo_loss(
        mech,
        np.full(8, 1.0 / 8),
        N_BENCH,
        RUNS_BENCH,
        seed=_cell_seed(1, "wss", 1.0),
        mode=FREQ,
    )
    l2_theory = l2_of_k(8, budget, N_BENCH, k)
    assert abs(res.mean_l2 / l2_theory - 1.0) < 0.05
    assert time.perf_counter() - start < 30.0


def test_09_hash_family_census_is_exact():
    start = time.perf_counter()
    for d_prime, hash_range in ((5, 2), (7, 4), (11, 4), (13, 4)):
        rep = hash_family_census(d_prime, hash_range)
        k_lo, r = divmod(d_prime, hash_range)
        k_hi = k_lo + 1
        pairs_sharing = r * k_hi * (k_hi - 1) + (hash_range - r) * k_lo * (k_lo - 1)
        assert rep.collision_count == pairs_sharing
        assert rep.collision == pairs_sharing / (d_prime * (d_prime - 1))
        assert rep.pairwise_uniform and rep.collision_constant
    assert time.perf_counter() - start < 1.0


def test_10_sum_to_one_and_per_coordinate_unbiasedness(bench_d100):
    cells, truth, _ = bench_d100
    checks = 0
    misses = 0
    for (name, eps), res in cells.items():
        assert np.abs(res.estimate_sums - 1.0).max() < 1e-9, (name, eps)
        budget = PrivacyBudget(eps)
        if name == "ss":
            k = optimal_support_size(100, budget)
            var = np.array(
                [osc_variance(t, 100, budget, k, N_BENCH, DIST) for t in truth]
            )
        else:
            mech = ocms_new(100, budget)
            weight = mech.r / mech.hash_range
            var = np.array(
                [
                    weight * osc_variance(t, mech.d_prime, budget, mech.k_hi, N_BENCH, DIST)
                    + (1 - weight)
                    * osc_variance(t, mech.d_prime, budget, mech.k_lo, N_BENCH, DIST)
                    for t in truth
                ]
            )
        se_of_mean = np.sqrt(var / RUNS_BENCH)
        deviation = np.abs(res.estimates.mean(axis=0) - truth)
        checks += truth.size
        misses += int((deviation >= 4.0 * se_of_mean).sum())
    assert misses <= 0.01 * checks, f"{misses} of {checks} coordinates off"


def test_11_encoding_roundtrips():
    for d, k in ((6, 3), (8, 2)):
        for ids in itertools.combinations(range(d), k):
            assert combination_unrank(combination_rank(ids), d, k) == ids
    mech = ocms_new(6, PrivacyBudget(math.log(3.0)))
    assert (mech.d_prime, mech.hash_range) == (7, 4)
    for a in range(1, 7):
        for b in range(7):
            for z in range(4):
                assert mech.unpack_response(mech.pack_response((a, b, z))) == (a, b, z)


def test_12_heavy_tail_benchmark_at_d1000():
    start = time.perf_counter()
    truth = zipf_distribution(1000)
    n = 50_000
    for eps in (1.0, 3.0):
        budget = PrivacyBudget(eps)
        for name, mech in (("ss", ss_new(1000, budget)), ("ocms", ocms_new(1000, budget))):
            res = monte_carlo_loss(
                mech, truth, n, 20, seed=_cell_seed(1, name, eps), mode=FREQ
            )
            if name == "ss":
                k = optimal_support_size(1000, budget)
                l2_theory = l2_of_k(1000, budget, n, k)
            else:
                l2_theory = ocms_mixture_l2(
                    1000, mech.d_prime, mech.hash_range, budget, n
                )
            assert abs(res.mean_l2 / l2_theory - 1.0) < 0.05, (name, eps)
    assert time.perf_counter() - start < 180.0
