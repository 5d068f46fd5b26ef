import numpy as np
import pytest
from hypothesis import given, strategies as st

from gclpr.errors import Degenerate, NonFinite, Singular
from gclpr.linalg import (
    Standardizer,
    covariance,
    precision,
    ridge_ladder,
    solve_spd,
    standardize_apply,
    standardize_fit,
)


def random_spd(rng, m, cond=1e3):
    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    ev = np.geomspace(1.0, 1.0 / cond, m)
    return (Q * ev) @ Q.T


def test_identity_solve():
    np.testing.assert_array_equal(solve_spd(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_diagonal_solve():
    np.testing.assert_allclose(solve_spd(np.diag([2.0, 4.0]), [2.0, 8.0]), [1.0, 2.0], rtol=0, atol=1e-15)


def test_random_spd_recovers_x(rng):
    A = random_spd(rng, 5)
    x = rng.standard_normal(5)
    np.testing.assert_allclose(solve_spd(A, A @ x), x, atol=1e-8)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1), st.floats(0.0, 6.0))
def test_solve_recovers_x_up_to_cond_1e6(m, seed, logc):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, m, cond=10**logc)
    A = 0.5 * (A + A.T)
    x = rng.standard_normal(m)
    got = solve_spd(A, A @ x)
    assert np.max(np.abs(got - x)) < 1e-8 * max(1.0, 10**logc / 1e3)


def test_matrix_rhs(rng):
    A = random_spd(rng, 4)
    B = rng.standard_normal((4, 3))
    np.testing.assert_allclose(A @ solve_spd(A, B), B, atol=1e-10)


def test_deterministic(rng):
    A = random_spd(rng, 6, cond=1e9)
    b = rng.standard_normal(6)
    assert np.array_equal(solve_spd(A, b), solve_spd(A, b))


def test_singular_uses_ridge():
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    x, lam = solve_spd(A, np.array([2.0, 2.0]), return_ridge=True)
    assert lam > 0
    # the ridge solution of a consistent system still (nearly) solves it
    np.testing.assert_allclose(A @ x, [2.0, 2.0], atol=1e-6)


def test_ridge_not_used_when_factorization_succeeds(rng):
    _, lam = solve_spd(random_spd(rng, 3), np.ones(3), return_ridge=True)
    assert lam == 0.0


def test_ridge_ladder_values():
    lad = ridge_ladder(2.0, 1e-8)
    np.testing.assert_allclose(lad, 2.0 * 10.0 ** np.arange(-8, -1), rtol=1e-12)
    assert ridge_ladder(0.0) == []


def test_zero_matrix_is_singular():
    with pytest.raises(Singular):
        solve_spd(np.zeros((2, 2)), np.ones(2))


def test_negative_definite_is_singular():
    with pytest.raises(Singular):
        solve_spd(-np.eye(2), np.ones(2))


def test_nonfinite_rejected():
    with pytest.raises(NonFinite):
        solve_spd(np.array([[1.0, np.nan], [np.nan, 1.0]]), np.ones(2))
    with pytest.raises(NonFinite):
        solve_spd(np.eye(2), np.array([np.inf, 1.0]))


def test_asymmetric_rejected():
    with pytest.raises(ValueError):
        solve_spd(np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones(2))


def test_covariance_hand_value():
    np.testing.assert_array_equal(covariance(np.array([[0.0], [2.0]])), [[2.0]])


def test_covariance_identical_rows_zero():
    assert np.all(covariance(np.tile([1.0, 2.0, 3.0], (5, 1))) == 0.0)


def test_covariance_too_few_rows():
    with pytest.raises(Degenerate):
        covariance(np.ones((1, 3)))


def test_covariance_independent_columns(rng):
    n = 20000
    C = covariance(rng.standard_normal((n, 2)))
    # sd of the sample covariance of two independent N(0,1) is ~1/sqrt(n)
    assert abs(C[0, 1]) < 3.0 / np.sqrt(n)


@given(st.integers(2, 30), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_covariance_symmetric_psd(n, d, seed):
    X = np.random.default_rng(seed).standard_normal((n, d)) * 10
    C = covariance(X)
    assert np.array_equal(C, C.T)
    assert np.linalg.eigvalsh(C).min() >= -1e-9 * max(1.0, np.trace(C))


def test_precision_inverts_with_jitter(rng):
    C = covariance(rng.standard_normal((200, 3)))
    P = precision(C)
    np.testing.assert_allclose(P @ C, np.eye(3), atol=1e-6)
    assert np.array_equal(P, P.T)
    # zero covariance stays invertible through the jitter
    assert np.all(np.isfinite(precision(np.zeros((2, 2)))))


def test_standardize_hand_values():
    s = standardize_fit(np.array([[1.0], [2.0], [3.0]]))
    assert s.means[0] == 2.0 and s.scales[0] == 1.0  # sample std of (1,2,3) is 1
    np.testing.assert_array_equal(standardize_apply(s, [[1.0], [2.0], [3.0]])[:, 0], [-1.0, 0.0, 1.0])


def test_standardize_constant_column():
    X = np.array([[5.0, 0.1], [5.0, 0.1], [5.0, 0.1]])
    s = standardize_fit(X)
    assert np.all(s.scales == 1.0)
    assert np.all(s.apply(X) == 0.0)


@given(st.integers(2, 40), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_standardize_roundtrip_and_moments(n, d, seed):
    X = np.random.default_rng(seed).normal(3.0, 7.0, (n, d))
    s = standardize_fit(X)
    T = s.apply(X)
    np.testing.assert_allclose(s.invert(T), X, atol=1e-12 * max(1.0, np.abs(X).max()))
    np.testing.assert_allclose(T.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(T.std(axis=0, ddof=1), 1.0, atol=1e-12)


def test_standardizer_dict_roundtrip():
    s = Standardizer(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    t = Standardizer.from_dict(s.to_dict())
    assert np.array_equal(t.means, s.means) and np.array_equal(t.scales, s.scales)
