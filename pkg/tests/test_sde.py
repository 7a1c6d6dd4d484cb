import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoredec.sde import (ConditionPair, OuveParams, analytic_score, diffusion_coeff, drift, kernel_mean, kernel_std,
                          kernel_var, sample_forward, simulate_forward)

P = OuveParams()


def scalar_pair(x0, y):
    return ConditionPair(np.array(float(x0)), np.array(float(y)))


def test_params_invariants():
    for bad in [dict(gamma=0), dict(sigma_min=0.5, sigma_max=0.05), dict(t_min=0), dict(t_min=1.0, T=1.0)]:
        with pytest.raises(ValueError):
            OuveParams(**bad)


def test_drift_examples(rng):
    x = rng.normal(size=5)
    np.testing.assert_array_equal(drift(x, x, P), 0)
    assert drift(np.array([0.0]), np.array([1.0]), P)[0] == pytest.approx(1.5)
    y = rng.normal(size=5)
    np.testing.assert_allclose(drift(3 * x, 3 * y, P), 3 * drift(x, y, P))
    with pytest.raises(ValueError):
        drift(np.zeros(3), np.zeros(4), P)


def test_diffusion_coeff_values():
    assert diffusion_coeff(0.0, P) == pytest.approx(0.05 * math.sqrt(2 * math.log(10)), abs=1e-12)
    assert diffusion_coeff(0.0, P) == pytest.approx(0.1072983, abs=1e-7)
    assert diffusion_coeff(1.0, P) == pytest.approx(1.0729831, abs=1e-7)
    assert diffusion_coeff(1.0, P) == pytest.approx(10 * diffusion_coeff(0.0, P), rel=1e-12)
    ts = np.linspace(0, 1, 101)
    assert np.all(np.diff(diffusion_coeff(ts, P)) > 0)
    with pytest.raises(ValueError):
        diffusion_coeff(1.5, P)
    with pytest.raises(ValueError):
        diffusion_coeff(-0.1, P)


def test_kernel_mean_examples(rng):
    x0, y = rng.normal(size=4), rng.normal(size=4)
    np.testing.assert_array_equal(kernel_mean(ConditionPair(x0, y), 0.0, P), x0)
    assert float(kernel_mean(scalar_pair(1, 0), 1.0, P)) == pytest.approx(0.2231302, abs=1e-7)
    dists = [np.linalg.norm(kernel_mean(ConditionPair(x0, y), t, P) - y) for t in np.linspace(0, 1, 50)]
    assert np.all(np.diff(dists) < 0)


def test_kernel_std_examples():
    assert kernel_std(0.0, P) == 0.0
    assert kernel_var(1.0, P) == pytest.approx(0.151307, abs=1e-6)
    assert kernel_std(1.0, P) == pytest.approx(0.388983, abs=1e-6)
    ts = np.linspace(1e-4, 1.0, 1000)
    assert np.all(np.diff(kernel_var(ts, P)) > 0)
    with pytest.raises(ValueError):
        kernel_std(1.01, P)


def test_kernel_var_solves_variance_ode():
    # d var/dt = -2 gamma var + g(t)^2
    ts = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    deriv = (kernel_var(ts + h, P) - kernel_var(ts - h, P)) / (2 * h)
    np.testing.assert_allclose(deriv, -2 * P.gamma * kernel_var(ts, P) + diffusion_coeff(ts, P) ** 2, rtol=1e-6)


def test_coefficients_finite_on_interval():
    ts = np.linspace(P.t_min, P.T, 500)
    for f in (diffusion_coeff, kernel_var, kernel_std):
        assert np.all(np.isfinite(f(ts, P)))


def test_sample_forward_examples(rng):
    pair = ConditionPair(rng.normal(size=3), rng.normal(size=3))
    np.testing.assert_array_equal(sample_forward(pair, 0.4, P, np.zeros(3)).x_t, kernel_mean(pair, 0.4, P))
    np.testing.assert_array_equal(sample_forward(pair, 0.0, P, rng.normal(size=3)).x_t, pair.x0)
    with pytest.raises(ValueError):
        sample_forward(pair, 0.4, P, np.zeros(4))


def test_sample_forward_moments():
    n = 100_000
    pair = ConditionPair(np.ones(n), np.zeros(n))
    z = np.random.default_rng(5).standard_normal(n)
    xs = sample_forward(pair, 1.0, P, z).x_t
    sd = kernel_std(1.0, P)
    assert abs(xs.mean() - math.exp(-1.5)) < 4 * sd / math.sqrt(n)
    assert abs(xs.std(ddof=1) - sd) < 4 * sd / math.sqrt(2 * (n - 1))


def test_analytic_score_examples(rng):
    pair = ConditionPair(rng.normal(size=3), rng.normal(size=3))
    np.testing.assert_array_equal(analytic_score(kernel_mean(pair, 0.5, P), pair, 0.5, P), 0)
    s = analytic_score(np.array(math.exp(-1.5) + kernel_std(1.0, P)), scalar_pair(1, 0), 1.0, P)
    assert float(s) == pytest.approx(-1 / 0.388983, abs=1e-5)
    assert float(s) == pytest.approx(-2.57081, abs=1e-5)
    with pytest.raises(ValueError):
        analytic_score(pair.x0, pair, 0.0, P)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.03, 1.0), st.integers(1, 6))
def test_substitution_identity(seed, t, n):
    r = np.random.default_rng(seed)
    pair = ConditionPair(r.normal(size=n) * 3, r.normal(size=n) * 3)
    z = r.normal(size=n)
    s = analytic_score(sample_forward(pair, t, P, z).x_t, pair, t, P)
    np.testing.assert_allclose(s, -z / kernel_std(t, P), rtol=1e-10, atol=1e-300)


def test_simulate_forward_drift_only():
    flat = OuveParams(sigma_min=0.05, sigma_max=0.05 * (1 + 1e-12))
    pair = scalar_pair(1.0, -0.5)
    out = simulate_forward(pair, flat, n_steps=1000, seed=0)
    exact = math.exp(-1.5) * 1.0 + (1 - math.exp(-1.5)) * -0.5
    assert abs(float(out.x_t) - exact) < 5e-3
    assert out.t == pytest.approx(1.0)


def test_simulate_forward_variance_ensemble():
    n = 2000
    out = simulate_forward(ConditionPair(np.ones(n), np.zeros(n)), P, n_steps=1000, seed=1234)
    var = kernel_var(1.0, P)
    assert abs(out.x_t.var(ddof=1) - var) < 3 * var * math.sqrt(2 / (n - 1))


def test_simulate_forward_deterministic_and_checks():
    pair = ConditionPair(np.zeros(10), np.ones(10))
    a = simulate_forward(pair, P, 200, seed=3).x_t
    b = simulate_forward(pair, P, 200, seed=3).x_t
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ValueError):
        simulate_forward(pair, P, 99, seed=3)


def test_condition_pair_shape_check():
    with pytest.raises(ValueError):
        ConditionPair(np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        ConditionPair(np.array([np.nan]), np.zeros(1))
