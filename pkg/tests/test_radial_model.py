import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coldstart.radial_model import (
    GSpec,
    KinkError,
    RegressionDataset,
    SufficientStats,
    WParams,
    eval_w,
    eval_w_prime,
    expected_loglik,
    grad_loglik,
    grad_loglik_stats,
    loglik,
    monotonicity_certificate,
    pair_slope,
    radial_loglik,
    simulate_dataset,
    w_prime_over_sqrt_w,
    w_range,
)

W5 = WParams(T=2.0, t=1.0, L=5.0, rho=0.1)


def test_w_at_origin():
    assert eval_w(0.0, WParams()) == 0.0


def test_w_third_piece_boundary():
    assert eval_w(1.0, W5) == pytest.approx(5.0)


def test_w_supremum():
    for r in [5.0, 6.0, 100.0]:
        assert eval_w(r, W5) == pytest.approx(5.4)
    assert W5.sup == pytest.approx(5.4)


def test_w_continuous_at_kinks():
    w = WParams(T=3.0, t=0.4, L=2.0, rho=0.2)
    for k in w.kinks:
        assert eval_w(k - 1e-12, w) == pytest.approx(eval_w(k, w), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(r=st.floats(0, 10), s=st.floats(0, 10))
def test_w_nondecreasing(r, s):
    lo, hi = min(r, s), max(r, s)
    assert eval_w(lo, W5) <= eval_w(hi, W5) + 1e-12


def test_w_prime_quadratic_piece():
    w = WParams(T=2.0, t=1.0, L=5.0, rho=0.1)
    assert eval_w_prime(0.25, w) == pytest.approx(8.0)
    h = 1e-6
    fd = (eval_w(0.25 + h, w) - eval_w(0.25 - h, w)) / (2 * h)
    assert fd == pytest.approx(8.0, rel=1e-6)


def test_w_prime_over_sqrt_w():
    assert w_prime_over_sqrt_w(0.25, W5) == pytest.approx(8.0)
    assert w_prime_over_sqrt_w(0.0, W5) == 0.0


def test_w_prime_on_plateau():
    for r in [5.0, 7.0]:
        assert eval_w_prime(r, W5) == 0.0


def test_w_range_endpoints():
    assert w_range(0.2, 3.0, W5) == (eval_w(0.2, W5), eval_w(3.0, W5))
    assert w_range(1.0, math.inf, W5)[1] == W5.sup


def test_wparams_validation():
    with pytest.raises(ValueError):
        WParams(T=0.05, rho=0.1)
    with pytest.raises(ValueError):
        WParams(t=2.0, L=1.0)


def test_wparams_scaled():
    w = WParams.scaled(2.0, 0.1, 1.0, 0.1, 0.5, 100)
    assert w.T == pytest.approx(20.0)
    assert w.t == pytest.approx(0.01)
    assert w.L == pytest.approx(0.1)


def test_null_dataset_is_noise():
    data = simulate_dataset(50, 3, seed=1, theta0=np.zeros(3))
    assert np.array_equal(data.Y, data.eps)


def test_dataset_deterministic():
    a = simulate_dataset(40, 5, seed=9)
    b = simulate_dataset(40, 5, seed=9)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)
    c = simulate_dataset(40, 5, seed=10)
    assert not np.array_equal(a.Y, c.Y)


def test_dataset_moments():
    N = 10_000
    data = simulate_dataset(N, 2, seed=3)
    assert abs(data.Y.mean()) < 4 / math.sqrt(N)
    assert abs(data.Y.var() - 1) < 0.1


def test_affine_g_unit_norm():
    g = GSpec("affine")
    x = np.linspace(0, 1, 200_001)[:, None]
    assert np.trapezoid(g(x) ** 2, x[:, 0]) == pytest.approx(1.0, rel=1e-9)


def test_loglik_at_origin():
    data = simulate_dataset(30, 4, seed=2)
    assert loglik(np.zeros(4), data, WParams()) == pytest.approx(-0.5 * np.sum(data.Y**2))


def test_loglik_rotation_invariant():
    data = simulate_dataset(30, 4, seed=2)
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    th = rng.standard_normal(4) * 0.3
    assert loglik(Q @ th, data, WParams()) == pytest.approx(loglik(th, data, WParams()), rel=1e-13)


def test_loglik_hand_value():
    # w(|theta|) = 4 at |theta| = t with T t = 2 -> w = (Tt)^2 = 4
    w = WParams(T=2.0, t=1.0, L=5.0, rho=0.1)
    data = RegressionDataset(N=2, D=1, X=np.zeros((2, 1)), Y=np.array([1.0, -1.0]), eps=np.zeros(2), seed=0)
    r = 1.0 / 2  # w(t/2) = 4 (T t/2)^2 = 4
    assert eval_w(r, w) == pytest.approx(4.0)
    assert loglik(np.array([r]), data, w) == pytest.approx(-5.0)


def test_sufficient_stats_agree_with_direct():
    data = simulate_dataset(60, 3, gspec=GSpec("affine"), seed=4, theta0=np.array([0.02, 0.0, 0.01]))
    st_ = data.stats()
    rng = np.random.default_rng(1)
    th = rng.standard_normal((20, 3)) * 0.5
    direct = loglik(th, data, WParams())
    via = radial_loglik(np.linalg.norm(th, axis=1), st_, WParams())
    assert np.allclose(direct, via, rtol=1e-12)


def test_profile_range_brackets():
    st_ = SufficientStats(N=10, syy=12.0, syg=3.0, sgg=10.0)
    lo, hi = st_.profile_range(0.01, 1.0)
    u = np.linspace(0.1, 1.0, 10001)
    vals = st_.profile(u * u)
    assert lo <= vals.min() + 1e-12 and hi >= vals.max() - 1e-12
    assert hi == pytest.approx(vals.max(), abs=1e-6)


def test_expected_loglik_origin_and_monotone():
    w = WParams()
    assert expected_loglik(np.zeros(3), 50, w) == -25.0
    u = np.array([1.0, 2.0, -1.0]) / math.sqrt(6)
    vals = [expected_loglik(r * u, 50, w) for r in np.linspace(0, 2, 41)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_expected_loglik_matches_mc():
    w = WParams()
    th = np.array([0.3, 0.0])
    N = 20
    vals = np.array([loglik(th, simulate_dataset(N, 2, seed=s), w) for s in range(10_000)])
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - expected_loglik(th, N, w)) < 3 * se


def _fd_grad(f, th, h=1e-6):
    g = np.empty_like(th)
    for i in range(len(th)):
        e = np.zeros_like(th)
        e[i] = h
        g[i] = (f(th + e) - f(th - e)) / (2 * h)
    return g


@pytest.mark.parametrize("radius", [0.03, 0.07, 0.5, 1.5])
def test_grad_matches_finite_differences(radius):
    w = WParams()
    data = simulate_dataset(40, 5, gspec=GSpec("affine"), seed=5)
    rng = np.random.default_rng(int(radius * 100))
    u = rng.standard_normal(5)
    th = radius * u / np.linalg.norm(u)
    g = grad_loglik(th, data, w)
    fd = _fd_grad(lambda x: loglik(x, data, w), th)
    scale = max(np.linalg.norm(fd), 1e-12)
    assert np.linalg.norm(g - fd) / scale < 1e-5 or np.allclose(g, 0, atol=1e-12)


def test_grad_zero_on_plateau_and_origin():
    data = simulate_dataset(10, 3, seed=0)
    w = WParams()
    assert np.all(grad_loglik(np.array([2.0, 0, 0]), data, w) == 0)
    assert np.all(grad_loglik(np.zeros(3), data, w) == 0)


def test_grad_raises_at_kink():
    data = simulate_dataset(10, 2, seed=0)
    w = WParams()
    with pytest.raises(KinkError):
        grad_loglik(np.array([w.t, 0.0]), data, w)


def test_grad_stats_matches_direct():
    w = WParams()
    data = simulate_dataset(40, 4, seed=6)
    rng = np.random.default_rng(2)
    th = rng.standard_normal((10, 4)) * 0.2
    batch = grad_loglik_stats(th, data.stats(), w)
    for k in range(10):
        assert np.allclose(batch[k], grad_loglik(th[k], data, w), rtol=1e-10, atol=1e-12)


def test_grad_expectation():
    w = WParams()
    th = np.array([0.03, 0.02])
    N = 15
    r = np.linalg.norm(th)
    g = np.array([grad_loglik(th, simulate_dataset(N, 2, seed=s), w) for s in range(10_000)])
    target = -0.5 * N * eval_w_prime(r, w) * th / r
    se = g.std(axis=0, ddof=1) / math.sqrt(len(g))
    assert np.all(np.abs(g.mean(axis=0) - target) < 3 * se + 1e-12)


def test_pair_slope_noiseless():
    N = 25
    data = RegressionDataset(N=N, D=3, X=np.random.default_rng(0).uniform(size=(N, 1)), Y=np.zeros(N),
                             eps=np.zeros(N), seed=0)
    w = WParams()
    for r, s in [(0.06, 0.09), (0.2, 0.9), (0.01, 0.5)]:
        assert pair_slope(data, w, r, s, u=[1, 0, 0], v=[0, 1, 1]) == pytest.approx(-N / 2, rel=1e-12)


def test_pair_slope_rejects_degenerate():
    data = simulate_dataset(10, 2, seed=0)
    with pytest.raises(ValueError):
        pair_slope(data, WParams(), 0.3, 0.3)


def test_monotonicity_certificate_passes_large_N():
    w = WParams()
    data = simulate_dataset(500, 50, seed=0)
    rep = monotonicity_certificate(data, w, r0=w.t / 2, n_pairs=100, seed=0)
    assert rep.passed
    assert rep.worst_slope <= rep.analytic_sup + 1e-6 * abs(rep.analytic_sup)


def test_monotonicity_analytic_sup_attained():
    # the pair hugging r0 approaches the analytic supremum when syg > 0
    w = WParams()
    for seed in range(20):
        data = simulate_dataset(100, 5, seed=seed)
        if data.stats().syg > 0:
            break
    rep = monotonicity_certificate(data, w, r0=0.2, n_pairs=20, seed=1)
    assert rep.worst_slope == pytest.approx(rep.analytic_sup, rel=1e-4)
