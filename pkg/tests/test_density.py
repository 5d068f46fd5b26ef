import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gclpr.density import RobustnessSpec, conditional_density_weights
from gclpr.errors import DegenerateWindow


def window_oracle(chart, y, k, mult=1.0):
    """Brute-force window sums, sorting all distances per row (self first on ties)."""
    n = y.size
    raw = np.empty(n)
    for i in range(n):
        d = np.linalg.norm(chart - chart[i], axis=1)
        order = np.lexsort((np.arange(n) != i, d))
        idx = order[:k]
        Yw = y[idx]
        h = max(mult * 1.06 * Yw.std(ddof=1) * k ** (-0.2), 1e-9 * np.ptp(y))
        raw[i] = np.mean(np.exp(-0.5 * ((y[i] - Yw) / h) ** 2)) if np.ptp(Yw) > 0 else 1.0
    return raw / raw.max()


def test_matches_brute_force(rng):
    Z = rng.uniform(0, 1, (60, 2))
    y = np.sin(3 * Z[:, 0]) + 0.1 * rng.standard_normal(60)
    spec = RobustnessSpec(k_r=8, bandwidth_multiplier=1.3)
    np.testing.assert_allclose(conditional_density_weights(Z, y, spec), window_oracle(Z, y, 8, 1.3), rtol=1e-12)


def test_identical_responses_give_ones():
    with pytest.warns(DegenerateWindow):
        w = conditional_density_weights(np.arange(10.0), np.full(10, 2.5), RobustnessSpec(k_r=3))
    assert np.all(w == 1.0)


def test_three_point_outlier_smallest():
    z = np.array([0.0, 1.0, 2.0])
    y = np.array([0.0, 0.1, 25.0])
    w = conditional_density_weights(z, y, RobustnessSpec(k_r=3))
    assert w[2] < w[0] and w[2] < w[1]
    assert w.max() == 1.0


def test_outlier_downweighted(rng):
    z = np.linspace(0, 1, 200)
    y = np.sin(2 * np.pi * z) + 0.05 * rng.standard_normal(200)
    y[100] += 3.0
    w = conditional_density_weights(z, y, RobustnessSpec(k_r=15))
    assert np.argmin(w) == 100


@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3))
def test_shift_invariance(seed, c):
    rng = np.random.default_rng(seed)
    z = rng.uniform(0, 1, 40)
    y = rng.standard_normal(40)
    spec = RobustnessSpec(k_r=6)
    np.testing.assert_allclose(
        conditional_density_weights(z, y + c, spec), conditional_density_weights(z, y, spec), atol=1e-9
    )


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_moving_point_away_never_raises_its_weight(seed, a, b):
    rng = np.random.default_rng(seed)
    z = np.linspace(0, 1, 30)
    y = 0.1 * rng.standard_normal(30)
    lo, hi = sorted((a, b))
    spec = RobustnessSpec(k_r=30)  # one window holding every row
    y1, y2 = y.copy(), y.copy()
    y1[7] = y.mean() + 0.3 + lo
    y2[7] = y.mean() + 0.3 + hi
    w1 = conditional_density_weights(z, y1, spec)[7]
    w2 = conditional_density_weights(z, y2, spec)[7]
    assert w2 <= w1 + 1e-12


def test_weights_in_unit_interval(rng):
    w = conditional_density_weights(rng.standard_normal((50, 3)), rng.standard_normal(50), RobustnessSpec(k_r=5))
    assert np.all((w > 0) & (w <= 1)) and w.max() == 1.0


def test_spec_validation_and_roundtrip():
    with pytest.raises(ValueError):
        RobustnessSpec(k_r=1)
    with pytest.raises(ValueError):
        RobustnessSpec(bandwidth_multiplier=0)
    with pytest.raises(ValueError):
        RobustnessSpec(chart_columns=())
    s = RobustnessSpec((0, 2), 7, 1.5)
    assert RobustnessSpec.from_dict(s.to_dict()) == s


def test_too_few_rows():
    with pytest.raises(ValueError):
        conditional_density_weights(np.zeros(3), np.zeros(3), RobustnessSpec(k_r=5))
