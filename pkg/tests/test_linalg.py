import numpy as np
import pytest

from ldpfreq.linalg import IterationLimitError, SingularMatrixError, invert, nnls


def test_invert_matches_numpy():
    rng = np.random.default_rng(0)
    for _ in range(25):
        d = int(rng.integers(2, 9))
        a = rng.normal(size=(d, d)) + d * np.eye(d)
        np.testing.assert_allclose(invert(a), np.linalg.inv(a), rtol=1e-9, atol=1e-11)


def test_invert_identity_property():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(6, 6)) + 6 * np.eye(6)
    np.testing.assert_allclose(invert(a) @ a, np.eye(6), atol=1e-11)


def test_invert_singular_raises():
    a = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrixError):
        invert(a)
    with pytest.raises(ValueError):
        invert(np.ones((2, 3)))


def test_nnls_simple_exact():
    a = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    y = np.array([1.0, 2.0, 3.0])
    fit = nnls(a, y)
    np.testing.assert_allclose(fit.x, [1.0, 2.0], atol=1e-12)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)


def test_nnls_clamps_to_zero():
    # unconstrained solution has a negative coordinate
    a = np.array([[1.0, 1.0], [1.0, -1.0]])
    y = np.array([0.0, 2.0])
    fit = nnls(a, y)
    assert fit.x[1] == 0.0
    assert fit.x[0] >= 0.0


def test_nnls_nonnegative_and_optimal_against_scipy():
    scipy_opt = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(7)
    for _ in range(20):
        m, w = int(rng.integers(3, 12)), int(rng.integers(2, 10))
        a = rng.normal(size=(m, w))
        y = rng.normal(size=m)
        fit = nnls(a, y)
        ref_x, ref_res = scipy_opt.nnls(a, y)
        assert (fit.x >= 0.0).all()
        assert fit.residual <= ref_res + 1e-9
        np.testing.assert_allclose(fit.x, ref_x, atol=1e-8)


def test_nnls_iteration_limit():
    rng = np.random.default_rng(3)
    a = rng.random((8, 6))
    y = rng.random(8)
    with pytest.raises(IterationLimitError):
        nnls(a, y, max_iter=1)


def test_nnls_zero_rhs():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    fit = nnls(a, np.zeros(2))
    np.testing.assert_allclose(fit.x, [0.0, 0.0], atol=1e-15)
