import itertools
from math import comb

import numpy as np
from hypothesis import given, strategies as st

from gclpr.basis import MultiIndexSet, basis_size, design_matrix, eval_row


def test_basis_size_examples():
    assert basis_size(1, 2) == 3
    assert basis_size(3, 2) == 10
    assert all(basis_size(0, d) == 1 for d in range(1, 6))


@given(st.integers(0, 5), st.integers(1, 5))
def test_basis_size_is_binomial_and_matches_enumeration(p, d):
    brute = sum(1 for a in itertools.product(range(p + 1), repeat=d) if sum(a) <= p)
    assert basis_size(p, d) == comb(p + d, d) == brute == MultiIndexSet.build(p, d).size


@given(st.integers(0, 4), st.integers(1, 4))
def test_multi_index_ordering(p, d):
    mi = MultiIndexSet.build(p, d)
    E = mi.exponents
    assert not E[0].any()
    deg = E.sum(axis=1)
    assert np.all(np.diff(deg) >= 0)  # graded
    assert len({tuple(r) for r in E}) == mi.size
    # the prefix for each lower degree is the lower-degree basis
    for q in range(p + 1):
        assert np.array_equal(E[: basis_size(q, d)], MultiIndexSet.build(q, d).exponents)
    assert np.array_equal(E, MultiIndexSet.build(p, d).exponents)


def test_linear_row_order():
    np.testing.assert_array_equal(eval_row(MultiIndexSet.build(1, 2), [2.0, -3.0]), [1.0, 2.0, -3.0])


def test_quadratic_1d():
    np.testing.assert_array_equal(eval_row(MultiIndexSet.build(2, 1), [3.0]), [1.0, 3.0, 9.0])


def test_zero_displacement():
    r = eval_row(MultiIndexSet.build(3, 3), np.zeros(3))
    assert r[0] == 1.0 and not r[1:].any()


@given(st.integers(0, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_entries_are_monomials(p, d, seed):
    mi = MultiIndexSet.build(p, d)
    T = np.random.default_rng(seed).uniform(-2, 2, (7, d))
    R = design_matrix(mi, T)
    ref = np.array([[np.prod(t**a) for a in mi.exponents] for t in T])
    np.testing.assert_allclose(R, ref, rtol=1e-13, atol=1e-14)


@given(st.integers(0, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_polynomial_reproduction(p, d, seed):
    rng = np.random.default_rng(seed)
    mi = MultiIndexSet.build(p, d)
    T = rng.uniform(-1, 1, (2 * mi.size + 3, d))
    coef = rng.standard_normal(mi.size)
    # evaluate the target polynomial independently of the basis code
    q = np.array([sum(c * np.prod(t**a) for c, a in zip(coef, mi.exponents)) for t in T])
    beta, *_ = np.linalg.lstsq(design_matrix(mi, T), q, rcond=None)
    assert np.max(np.abs(design_matrix(mi, T) @ beta - q)) < 1e-10


def test_design_matrix_rejects_wrong_dim():
    import pytest

    with pytest.raises(ValueError):
        design_matrix(MultiIndexSet.build(1, 2), np.zeros((3, 3)))
