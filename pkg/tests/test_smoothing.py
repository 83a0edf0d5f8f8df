import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from smoothaa.smoothing import (
    KAPPA,
    phi,
    phi_derivative,
    smooth_abs_vec,
    smooth_max_vec,
    smooth_soft_threshold,
    soft_threshold,
)

mus = st.floats(min_value=-8, max_value=0).map(lambda e: 10.0**e)
reals = st.floats(min_value=-50, max_value=50, allow_nan=False)


def branches(mu):
    # the five pieces written out independently, with their derivatives
    s = math.sqrt(mu)
    vals = [
        lambda t: 0.0,
        lambda t: t * t / (2 * mu),
        lambda t: (t - mu) ** 2 / 4 + t - mu / 2,
        lambda t: -((t - mu - 2 * s) ** 2) / 4 + t,
        lambda t: t,
    ]
    ders = [
        lambda t: 0.0,
        lambda t: t / mu,
        lambda t: (t - mu) / 2 + 1,
        lambda t: -(t - mu - 2 * s) / 2 + 1,
        lambda t: 1.0,
    ]
    return vals, ders, (0.0, mu, mu + s, mu + 2 * s)


def test_branch_examples():
    assert phi(-3.0, 0.5) == 0.0
    assert phi(0.4, 0.4) == pytest.approx(0.2, abs=1e-15)
    assert phi(10.0, 0.01) == 10.0
    assert phi_derivative(-1.0, 0.3) == 0.0
    mu = 0.2
    assert phi_derivative(mu + 2 * math.sqrt(mu) + 0.1, mu) == 1.0


def test_interior_branches_match_formulas():
    mu = 0.25  # breakpoints 0, 0.25, 0.75, 1.25
    vals, ders, _ = branches(mu)
    for t, i in [(0.1, 1), (0.5, 2), (1.0, 3), (2.0, 4), (-0.5, 0)]:
        assert phi(t, mu) == pytest.approx(vals[i](t), abs=1e-15)
        assert phi_derivative(t, mu) == pytest.approx(ders[i](t), abs=1e-15)


def test_breakpoint_continuity_random_mu():
    rng = np.random.default_rng(3)
    for mu in rng.uniform(1e-12, 1.0, 100):
        vals, ders, bps = branches(mu)
        for i, b in enumerate(bps):
            assert abs(vals[i](b) - vals[i + 1](b)) <= 1e-12
            assert abs(ders[i](b) - ders[i + 1](b)) <= 1e-10
            assert abs(phi(b, mu) - vals[i + 1](b)) <= 1e-12
            assert abs(phi_derivative(b, mu) - ders[i + 1](b)) <= 1e-10


@given(mus)
def test_c1_at_breakpoints_log_uniform(mu):
    vals, ders, bps = branches(mu)
    for i, b in enumerate(bps):
        assert abs(vals[i](b) - vals[i + 1](b)) <= 1e-10
        assert abs(ders[i](b) - ders[i + 1](b)) <= 1e-10


@given(reals, mus)
def test_error_bounds(t, mu):
    p = phi(t, mu)
    assert max(t, 0.0) - mu <= p <= max(t, 0.0) + mu
    # sharp form: phi never exceeds max(t, 0) and is off by at most mu/2
    assert p <= max(t, 0.0) + 1e-15 * max(1.0, abs(t))
    assert max(t, 0.0) - p <= KAPPA * mu * (1 + 1e-12) + 1e-15 * abs(t)


@given(mus)
def test_error_constant_is_attained_at_mu(mu):
    assert max(mu, 0.0) - phi(mu, mu) == pytest.approx(KAPPA * mu, rel=1e-12)


@given(mus)
def test_derivative_range_on_dense_grid(mu):
    t = np.linspace(-1.0, mu + 2 * math.sqrt(mu) + 1.0, 4001)
    d = phi_derivative(t, mu)
    assert np.all(d >= 0.0)
    assert np.all(d <= 1 + math.sqrt(mu) / 2 + 1e-15)


@given(reals, mus)
def test_exact_outside_band(t, mu):
    if t < 0 or t > mu + 2 * math.sqrt(mu):
        assert phi(t, mu) == max(t, 0.0)


def test_smooth_max_vec_examples():
    np.testing.assert_array_equal(smooth_max_vec([-1.0, 5.0], 0.01), [0.0, 5.0])
    np.testing.assert_array_equal(smooth_max_vec(np.zeros(4), 0.3), np.zeros(4))
    rng = np.random.default_rng(0)
    for _ in range(1000):
        mu = 10 ** rng.uniform(-8, 0)
        v = rng.normal(scale=3 * mu + 0.1, size=6)
        assert np.max(np.abs(smooth_max_vec(v, mu) - np.maximum(v, 0))) <= mu


def test_smooth_abs_examples():
    np.testing.assert_allclose(smooth_abs_vec([-2.0, 2.0], 0.001), [2.0, 2.0], atol=0.001)
    assert smooth_abs_vec(0.0, 0.5) == 0.0


@given(st.lists(reals, min_size=1, max_size=8), mus)
def test_smooth_abs_even(v, mu):
    v = np.array(v)
    np.testing.assert_array_equal(smooth_abs_vec(v, mu), smooth_abs_vec(-v, mu))


def test_soft_threshold_examples():
    np.testing.assert_array_equal(soft_threshold([2.0, -0.5], 1.0), [1.0, 0.0])
    np.testing.assert_allclose(smooth_soft_threshold([2.0, -0.5], 1.0, 1e-8), [1.0, 0.0], atol=1e-8)


@given(st.lists(reals, min_size=1, max_size=8), st.floats(0, 5), mus)
def test_smooth_soft_threshold_odd(v, t, mu):
    v = np.array(v)
    np.testing.assert_array_equal(smooth_soft_threshold(-v, t, mu), -smooth_soft_threshold(v, t, mu))


@given(reals, st.floats(0, 10))
def test_soft_threshold_identity(u, t):
    expected = math.copysign(max(abs(u) - t, 0.0), u)
    assert soft_threshold(u, t) == expected or (expected == 0 and soft_threshold(u, t) == 0)


@given(st.lists(reals, min_size=1, max_size=8), st.floats(0, 5), mus)
def test_smooth_soft_threshold_exact_outside_band(v, t, mu):
    v = np.array(v)
    band = mu + 2 * math.sqrt(mu)
    out = (np.abs(v) - t > band) | (np.abs(v) < t)
    np.testing.assert_array_equal(smooth_soft_threshold(v, t, mu)[out], soft_threshold(v, t)[out])


def test_mu_zero_routes_to_exact():
    t = np.array([-1.0, 0.0, 0.3, 2.0])
    np.testing.assert_array_equal(phi(t, 0.0), np.maximum(t, 0))
    np.testing.assert_array_equal(smooth_soft_threshold(t, 0.5, 0.0), soft_threshold(t, 0.5))


@pytest.mark.parametrize("bad", [-1e-3, float("nan"), float("-inf")])
def test_invalid_mu(bad):
    with pytest.raises(ValueError):
        phi(1.0, bad)
    with pytest.raises(ValueError):
        smooth_max_vec([1.0], bad)


def test_negative_threshold_rejected():
    with pytest.raises(ValueError):
        smooth_soft_threshold([1.0], -0.1, 0.1)
