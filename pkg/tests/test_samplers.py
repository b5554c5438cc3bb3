import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ks_distance, tiny_model
from coldstart.measures import band_prior_mass
from coldstart.priors import PriorSpec, sample_prior
from coldstart.radial_model import WParams
from coldstart.rng import make_rng
from coldstart.samplers import (
    KernelConfig,
    NumericFault,
    RadialPosterior,
    mala_log_q,
    mala_step,
    mala_step_rng,
    pcn_beta_cap,
    pcn_step,
    run_chain,
    run_chains,
    sphere_propose,
    sphere_rwmh_step,
    step_assumption_estimate,
)
from coldstart.spiked_tensor import TensorPosterior, simulate_tensor, uniform_sphere


def test_kernel_config_validation():
    with pytest.raises(ValueError):
        KernelConfig(kind="pCN")
    with pytest.raises(ValueError):
        KernelConfig(kind="pCN", beta=0.1, gamma=0.1)
    with pytest.raises(ValueError):
        KernelConfig(kind="pCN", beta=1.5)
    with pytest.raises(ValueError):
        KernelConfig(kind="HMC", beta=0.1)
    assert KernelConfig(kind="MALA", gamma=0.01).step == 0.01


# ---------------------------------------------------------------- pCN


def test_pcn_tiny_beta_is_identity(tiny):
    x = np.array([[0.3, -0.2]])
    xi = np.array([[1.0, 2.0]])
    res = pcn_step(x, xi, np.log([0.999]), 1e-30, tiny.loglik)
    assert res.accepted[0]
    assert np.allclose(res.state, x, atol=1e-14)


def test_pcn_beta_one_is_fresh_draw(tiny):
    x = np.array([[0.3, -0.2]])
    xi = np.array([[0.05, 0.1]])
    res = pcn_step(x, xi, np.log([0.5]), 1.0, tiny.loglik)
    assert np.array_equal(res.proposal, xi)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-1, 1), st.floats(-1, 1), st.floats(1e-3, 1), st.floats(-50, 0))
def test_pcn_uphill_always_accepted(a, b, c, d, beta, log_u):
    m = tiny_model()
    x = np.array([[a, b]])
    res = pcn_step(x, np.array([[c, d]]), np.array([log_u]), beta, m.loglik)
    if m.loglik(res.proposal)[0] >= m.loglik(x)[0]:
        assert res.accepted[0]


def test_pcn_prior_invariance_without_likelihood():
    # with a flat likelihood pCN is an autoregression that preserves the prior
    sp = PriorSpec.alpha_regular(5)
    flat = lambda x: np.zeros(np.shape(x)[:-1])
    rng = make_rng(0, 1)
    x = sample_prior(sp, 20_000, rng=rng)
    for _ in range(20):
        x = pcn_step(x, sample_prior(sp, len(x), rng=rng), np.log(rng.random(len(x))), 0.3, flat).state
    assert np.allclose(x.var(axis=0), sp.variances, rtol=0.05)


# ---------------------------------------------------------------- MALA


def test_mala_tiny_gamma_accepts(tiny):
    x = np.array([[0.7, 0.4]])
    lp, g = tiny.logpost(x), tiny.grad_logpost(x)
    xi = np.array([[0.3, -1.2]])
    gamma = 1e-12
    prop = x + gamma * g + math.sqrt(2 * gamma) * xi
    log_a = (tiny.logpost(prop) - lp + mala_log_q(x, prop, tiny.grad_logpost(prop), gamma)
             - mala_log_q(prop, x, g, gamma))
    assert abs(log_a[0]) < 1e-5
    assert mala_step(x, xi, np.log([0.99]), gamma, tiny.logpost, tiny.grad_logpost).accepted[0]


def test_mala_proposal_density_normalisation():
    # q(x -> y) is N(x + gamma g, 2 gamma I); check the quadratic form against scipy
    from scipy.stats import multivariate_normal

    x = np.array([0.1, 0.2, -0.3])
    g = np.array([1.0, -2.0, 0.5])
    gamma = 0.07
    y1, y2 = np.array([0.3, 0.0, 0.1]), np.array([-0.2, 0.4, 0.0])
    mvn = multivariate_normal(x + gamma * g, 2 * gamma * np.eye(3))
    diff = mala_log_q(y1, x, g, gamma) - mala_log_q(y2, x, g, gamma)
    assert diff == pytest.approx(mvn.logpdf(y1) - mvn.logpdf(y2), rel=1e-12)


def test_mala_detailed_balance_flux():
    # D = 1, cells of width 0.06 on [-3, 3]; transitions i -> j and j -> i must balance
    m = tiny_model(D=1, N=20, seed=1)
    edges = np.linspace(-3, 3, 102)
    rng = make_rng(11, 3)
    R, steps, burn = 100, 10_500, 500
    x = sample_prior(m.prior, R, rng=rng)
    flux = np.zeros((101, 101))
    n = 0
    cell = np.clip(np.searchsorted(edges, x[:, 0]) - 1, 0, 100)
    for k in range(steps):
        x = mala_step_rng(x, m, 0.05, rng).state
        new = np.clip(np.searchsorted(edges, x[:, 0]) - 1, 0, 100)
        if k >= burn:
            np.add.at(flux, (cell, new), 1)
            n += R
        cell = new
    asym = np.abs(flux - flux.T).max() / n
    assert asym < 1e-2


def test_mala_stationarity_from_exact_draws(tiny, tiny_cdf):
    r_ref, cdf = tiny_cdf
    rng = np.random.default_rng(5)
    u = rng.random(10_000)
    r = np.interp(u, cdf, r_ref)
    ang = rng.uniform(0, 2 * np.pi, 10_000)
    x = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
    before = ks_distance(r, r_ref, cdf)
    for _ in range(100):
        x = mala_step_rng(x, tiny, 0.01, rng).state
    after = ks_distance(np.linalg.norm(x, axis=1), r_ref, cdf)
    # the KS statistic of 10^4 exact draws is ~ 0.01; stationarity keeps it there
    assert before < 0.02 and after < 0.02


# ---------------------------------------------------------------- sphere


def test_sphere_proposal_on_sphere():
    rng = np.random.default_rng(0)
    x = uniform_sphere(rng, 50, 7)
    y, _ = sphere_propose(x, rng.standard_normal(x.shape), 0.3)
    assert np.allclose(np.linalg.norm(y, axis=1), 1.0)


def test_sphere_tiny_step_accepts():
    inst = simulate_tensor(8, 3, 2.0, seed=0)
    model = TensorPosterior(inst)
    cfg = KernelConfig(kind="SphereRWMH", sphere_step=1e-9, seed=1)
    x0 = uniform_sphere(np.random.default_rng(1), 4, 8)
    tr = run_chains(x0, cfg, model, 200)
    assert all(t.acceptance_rate > 0.99 for t in tr)


def test_sphere_null_latitude_matches_bands():
    # lambda = 0: the chain targets the uniform measure
    n = 6
    inst = simulate_tensor(n, 3, 0.0, seed=0)
    model = TensorPosterior(inst)
    cfg = KernelConfig(kind="SphereRWMH", sphere_step=0.8, seed=2)
    x0 = uniform_sphere(np.random.default_rng(2), 200, n)
    tr = run_chains(x0, cfg, model, 2000)
    q = np.concatenate([t.radius[100:] for t in tr])
    edges = np.linspace(-1, 1, 11)
    emp = np.histogram(q, edges)[0] / len(q)

    def tail(e):  # uniform-sphere mass of {q > e}
        if abs(e) >= 1:
            return 0.0 if e > 0 else 1.0
        return band_prior_mass(n, e, 3) if e >= 0 else 1.0 - band_prior_mass(n, -e, 3)

    ref = np.array([tail(a) - tail(b) for a, b in zip(edges[:-1], edges[1:])])
    assert ref.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(emp - ref)) < 0.01


def test_sphere_loglik_time_average_stable():
    inst = simulate_tensor(12, 3, 3.0, seed=0)
    model = TensorPosterior(inst)
    cfg = KernelConfig(kind="SphereRWMH", sphere_step=0.1, seed=3)
    x0 = uniform_sphere(np.random.default_rng(3), 20, 12)
    tr = run_chains(x0, cfg, model, 50_000, thin=10)
    ll = np.concatenate([[model.loglik(s) for s in t.states[len(t.states) // 10:]] for t in tr], axis=None)
    ll = np.asarray(ll).ravel()
    h = len(ll) // 2
    a, b = ll[:h].mean(), ll[h:].mean()
    assert abs(a - b) / abs(0.5 * (a + b)) < 0.02


# ---------------------------------------------------------------- engine


def test_hit_time_zero_when_starting_inside(tiny):
    cfg = KernelConfig(kind="pCN", beta=0.1, seed=0)
    tr = run_chain(np.array([0.1, 0.0]), cfg, tiny, 50, stop_radius=0.5)
    assert tr.hit_time == 0 and not tr.censored and tr.n_records == 0


def test_censoring(tiny):
    cfg = KernelConfig(kind="pCN", beta=1e-6, seed=0)
    tr = run_chain(np.array([2.0, 0.0]), cfg, tiny, 30, stop_radius=0.01)
    assert tr.censored and tr.hit_time == 30 and tr.n_records == 30


def test_same_seed_same_trace(tiny):
    cfg = KernelConfig(kind="MALA", gamma=0.01, seed=4)
    a = run_chain(np.array([0.5, 0.5]), cfg, tiny, 300)
    b = run_chain(np.array([0.5, 0.5]), cfg, tiny, 300)
    assert np.array_equal(a.radius, b.radius) and np.array_equal(a.accepted, b.accepted)


def test_batched_equals_single_and_chunked(tiny):
    cfg = KernelConfig(kind="pCN", beta=0.2, seed=9)
    x0 = sample_prior(tiny.prior, 6, seed=1)
    batch = run_chains(x0, cfg, tiny, 700)
    chunked = run_chains(x0[:2], cfg, tiny, 700) + run_chains(x0[2:], cfg, tiny, 700, chain_offset=2)
    for a, b in zip(batch, chunked):
        assert np.array_equal(a.radius, b.radius)
    single = run_chain(x0[0], cfg, tiny, 700)
    assert np.array_equal(single.radius, batch[0].radius)


def test_budget_monotone_hit_times(tiny):
    cfg = KernelConfig(kind="pCN", beta=0.3, seed=2)
    x0 = np.tile([2.0, 0.0], (8, 1))
    short = run_chains(x0, cfg, tiny, 20, stop_radius=0.3)
    long = run_chains(x0, cfg, tiny, 200, stop_radius=0.3)
    for a, b in zip(short, long):
        assert b.hit_time >= a.hit_time if a.censored else b.hit_time == a.hit_time


def test_trace_csv(tmp_path, tiny):
    tr = run_chain(np.array([0.5, 0.5]), KernelConfig(kind="pCN", beta=0.1, seed=0), tiny, 5)
    p = tmp_path / "t.csv"
    tr.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "k,radius,accepted,step_norm" and len(lines) == 6
    assert lines[1].startswith("1,")


def test_fault_is_recorded():
    class Bad:
        D = 2

        def loglik(self, x):
            r = np.linalg.norm(x, axis=-1)
            return np.where(r > 1.5, np.nan, -r)

        def summary(self, x):
            return np.linalg.norm(x, axis=-1)

        def prior_noise(self, rng, shape):
            return rng.standard_normal(tuple(shape) + (2,))

    cfg = KernelConfig(kind="pCN", beta=1.0, seed=0)
    x0 = np.zeros((3, 2))
    with pytest.raises(NumericFault):
        run_chains(x0, cfg, Bad(), 500)
    tr = run_chains(x0, cfg, Bad(), 500, on_fault="record")
    assert any(t.fault for t in tr)


# ---------------------------------------------------------------- step-size audit


def test_pcn_beta_cap_value():
    assert pcn_beta_cap(0.1, 1.75) == pytest.approx(min(0.5, 0.1 / 7, 0.01 / 64))


def test_step_assumption_small_beta():
    D = 100
    model = RadialPosterior(tiny_model(D=D).stats, WParams(), PriorSpec.isotropic(D))
    eta, L = 0.1, 1.75
    cfg = KernelConfig(kind="pCN", beta=pcn_beta_cap(eta, L), seed=0)
    rep = step_assumption_estimate(cfg, model, L, eta, n_probe=10_000, n_inner=10, seed=0)
    assert rep.max_exceed_freq == 0.0


def test_step_assumption_fresh_draws():
    D = 100
    model = RadialPosterior(tiny_model(D=D).stats, WParams(), PriorSpec.isotropic(D))
    cfg = KernelConfig(kind="pCN", beta=1.0, seed=0)
    rep = step_assumption_estimate(cfg, model, 10.0, 0.01, n_probe=200, n_inner=20, seed=1)
    # proposals that are accepted move by O(1); rejections are the only non-moves
    assert rep.max_exceed_freq > 0.9


def test_step_assumption_huge_eta():
    D = 20
    model = RadialPosterior(tiny_model(D=D).stats, WParams(), PriorSpec.isotropic(D))
    cfg = KernelConfig(kind="pCN", beta=1.0, seed=0)
    L = 1.0
    eta = 2 * (2 * L + 6 * math.sqrt(D / D)) + 1
    rep = step_assumption_estimate(cfg, model, L, eta, n_probe=100, n_inner=20, seed=1)
    assert rep.max_exceed_freq == 0.0
