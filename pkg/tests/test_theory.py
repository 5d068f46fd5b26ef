import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gclpr.basis import MultiIndexSet
from gclpr.errors import QuadratureUnderresolved, ZeroContextMass
from gclpr.kernels import ContextFactorSpec
from gclpr.synthetic import linear_sampler, sine_sampler, two_context_sampler
from gclpr.theory import (
    DiscreteJointDistribution,
    bias_rate_experiment,
    effective_residual_factor,
    kernel_moments,
    lemma1_residual,
    m_w_oracle,
    radial_moment_oracle,
    random_distribution,
    variance_scaling_experiment,
)

IND = ContextFactorSpec("indicator", "c")
AA = ContextFactorSpec("aitchison_aitken", "c", lam=0.3, category_count=3)


def small_dist():
    # at z=0: contexts a (y 0 or 2) and b (y 1); at z=1 a single atom
    return DiscreteJointDistribution(
        z=[0, 0, 0, 1], c=["a", "a", "b", "a"], y=[0.0, 2.0, 1.0, 5.0], prob=[0.2, 0.2, 0.4, 0.2]
    )


def test_distribution_validation():
    with pytest.raises(ValueError):
        DiscreteJointDistribution([0, 1], ["a", "b"], [0, 1], [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteJointDistribution([0, 1], ["a", "b"], [0, 1], [-0.5, 1.5])
    with pytest.raises(ValueError):
        DiscreteJointDistribution([0, np.inf], ["a", "b"], [0, 1], [0.5, 0.5])


def test_m_w_reductions():
    d = small_dist()
    assert m_w_oracle(d, None, "a", 0.0) == pytest.approx(d.conditional_mean(0.0), abs=1e-15)
    assert m_w_oracle(d, None, "a", 0.0) == pytest.approx((0.2 * 0 + 0.2 * 2 + 0.4 * 1) / 0.8)
    assert m_w_oracle(d, IND, "a", 0.0) == pytest.approx(1.0, abs=1e-15)
    assert m_w_oracle(d, IND, "b", 0.0) == pytest.approx(1.0, abs=1e-15)
    assert m_w_oracle(d, IND, "a", 1.0) == 5.0


def test_two_context_weighted_mean():
    d = DiscreteJointDistribution([0, 0], ["a", "b"], [0.0, 1.0], [0.3, 0.7])
    # equal weights: probability weighted mean
    assert m_w_oracle(d, None, "a", 0.0) == pytest.approx(0.7, abs=1e-15)
    half = ContextFactorSpec("aitchison_aitken", "c", lam=0.5, category_count=2)
    assert m_w_oracle(d, half, "a", 0.0) == pytest.approx(0.35 / 0.65, abs=1e-15)


def test_zero_context_mass():
    d = small_dist()
    with pytest.raises(ZeroContextMass):
        m_w_oracle(d, IND, "b", 1.0)
    with pytest.raises(ZeroContextMass):
        m_w_oracle(d, None, "a", 0.5)
    with pytest.raises(ZeroContextMass):
        lemma1_residual(d, IND, "zz", 0.0, [0.0])


def test_decomposition_residual_on_random_distributions():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        d = random_distribution(rng)
        for fac in (None, AA):
            for z in (0.0, 1.0):
                try:
                    a = rng.normal(0, 3, 20)
                    worst = max(worst, lemma1_residual(d, fac, "a", z, a))
                except ZeroContextMass:
                    continue
    assert worst < 1e-12


@given(st.integers(0, 2**32 - 1), st.floats(-10, 10))
def test_decomposition_minimizer(seed, a):
    d = random_distribution(np.random.default_rng(seed), atoms=8, z_values=(0.0,))
    m = m_w_oracle(d, AA, "b", 0.0)
    assert lemma1_residual(d, AA, "b", 0.0, [m]) < 1e-12
    # strict convexity: any other value has a larger weighted loss
    cond = d.prob / d.prob.sum()
    from gclpr.kernels import factor_values

    w = cond * factor_values(AA, "b", d.c)
    loss = lambda t: float(w @ (d.y - t) ** 2)
    if abs(a - m) > 1e-6:
        assert loss(a) > loss(m)


def test_effective_residual_factor():
    d = small_dist()
    # W == 1: the conditional variance
    y, p = np.array([0.0, 2.0, 1.0]), np.array([0.25, 0.25, 0.5])
    assert effective_residual_factor(d, None, "a", 0.0) == pytest.approx(p @ (y - 1.0) ** 2)
    # indicator on a: E[1{a}(Y-1)^2] / P(a)^2
    assert effective_residual_factor(d, IND, "a", 0.0) == pytest.approx((0.25 + 0.25) / 0.5**2)


# ---- kernel moments ----------------------------------------------------------


def test_tricube_and_gaussian_constants():
    assert kernel_moments("tricube", 0, 1).M0[0, 0] == pytest.approx(81 / 70, abs=1e-7)
    assert kernel_moments("gaussian", 0, 1).M0[0, 0] == pytest.approx(math.sqrt(2 * math.pi), abs=1e-7)
    assert kernel_moments("laplacian", 0, 1).M0[0, 0] == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("kernel", ["tricube", "gaussian"])
@pytest.mark.parametrize("p,d", [(0, 1), (1, 1), (2, 1), (1, 2), (2, 2), (1, 3)])
def test_moment_matrix_structure_and_oracle(kernel, p, d):
    km = kernel_moments(kernel, p, d)
    mi = MultiIndexSet.build(p, d)
    E = mi.exponents
    for M in (km.M0, km.Omega0):
        assert np.array_equal(M, M.T)
    assert np.all(np.diag(km.Omega0) >= 0)
    assert np.linalg.cond(km.M0) < 1e8
    for i in range(len(E)):
        for j in range(len(E)):
            a = E[i] + E[j]
            if (a % 2).any():
                assert km.M0[i, j] == pytest.approx(0.0, abs=1e-10)
                continue
            for M, pw in ((km.M0, 1), (km.Omega0, 2)):
                assert M[i, j] == pytest.approx(radial_moment_oracle(kernel, a, pw), abs=2e-6)


def test_variance_constant_local_constant():
    km = kernel_moments("tricube", 0, 1)
    assert km.variance_constant() == pytest.approx(km.Omega0[0, 0] / km.M0[0, 0] ** 2)
    assert km.variance_constant() > 0


def test_underresolved_quadrature():
    with pytest.raises(QuadratureUnderresolved):
        kernel_moments("tricube", 2, 1, nodes=7)
    with pytest.raises(QuadratureUnderresolved):
        kernel_moments("laplacian", 1, 2)


def test_unknown_kernel():
    with pytest.raises(ValueError):
        kernel_moments("box", 0, 1)


# ---- Monte-Carlo harnesses (small versions; full runs in acceptance) ---------


def test_bias_zero_for_linear_truth():
    res = bias_rate_experiment(linear_sampler(1.0, 2.0, 0.0), lambda z: 1.0 + 2.0 * z, 1, [0.05, 0.1, 0.2], n=500, replications=5)
    assert np.all(res.value < 1e-8)


def test_bias_slope_local_linear_small():
    s = sine_sampler(0.1)
    truth = lambda z: math.sin(2 * math.pi * z)
    res = bias_rate_experiment(s, truth, 1, np.geomspace(0.05, 0.2, 5), n=2000, replications=60, query=0.25, seed=3)
    assert 1.5 < res.slope < 2.5
    assert res.ci[0] <= res.slope <= res.ci[1]


def test_bias_experiment_deterministic():
    s = sine_sampler(0.1)
    truth = lambda z: math.sin(2 * math.pi * z)
    a = bias_rate_experiment(s, truth, 0, [0.05, 0.1], n=300, replications=8, seed=9)
    b = bias_rate_experiment(s, truth, 0, [0.05, 0.1], n=300, replications=8, seed=9, threads=3)
    assert a.to_dict() == b.to_dict()


def test_variance_zero_without_noise():
    res = variance_scaling_experiment(linear_sampler(1.0, 2.0, 0.0), 1, 0.1, [500, 1000], replications=10)
    assert np.all(res.value < 1e-16)


def test_context_mixing_variance_positive():
    res = variance_scaling_experiment(two_context_sampler((0.0, 1.0), 0.0), 1, 0.1, [500, 1000], replications=30)
    assert np.all(res.value > 1e-6)
    # selecting one context removes the mixing variation again
    sel = variance_scaling_experiment(
        two_context_sampler((0.0, 1.0), 0.0), 1, 0.1, [500, 1000], replications=10,
        factors=(ContextFactorSpec("indicator", "ctx"),), query_contexts={"ctx": np.array(["a"], dtype=object)},
    )
    assert np.all(sel.value < 1e-16)


@pytest.mark.slow
def test_rate_windows_hold_across_seeds():
    truth = lambda z: math.sin(2 * math.pi * z)
    hs = np.geomspace(0.05, 0.2, 5)
    hits = 0
    for seed in range(10):
        b1 = bias_rate_experiment(sine_sampler(0.1), truth, 1, hs, 4000, 200, 0.25, seed=seed).slope
        b0 = bias_rate_experiment(sine_sampler(0.1), truth, 0, hs, 4000, 200, 0.0, seed=seed).slope
        v = variance_scaling_experiment(sine_sampler(0.5), 1, 0.1, [1000, 2000, 4000, 8000], 200, seed=seed).slope
        hits += (1.6 <= b1 <= 2.4) and (0.7 <= b0 <= 1.3) and (-1.25 <= v <= -0.75)
    assert hits >= 10 * 0.95
