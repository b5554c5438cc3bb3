import numpy as np
import pytest

from coldstart.experiments import (
    RegressionSetup,
    audit_trace,
    barrier_reduction_audit,
    bottleneck_bound_check,
    cold_start_points,
    contraction_slope,
    hitting_time_experiment,
)
from coldstart.measures import isotropic_ball_prob
from coldstart.priors import PriorSpec
from coldstart.radial_model import WParams
from coldstart.samplers import KernelConfig, RadialPosterior, run_chains
from coldstart.spiked_tensor import Bands, simulate_tensor, sphere_step_for


def test_contraction_slope_value():
    T = contraction_slope(0.1, 128, 128)
    cost = -isotropic_ball_prob(128, 0.05).log / 128
    assert T == pytest.approx(4 * (1 + cost) / 0.1)
    assert 140 < T < 142


def test_cold_start_points_on_sphere():
    x = cold_start_points(np.random.default_rng(0), 10, 7, 1.02)
    assert np.allclose(np.linalg.norm(x, axis=1), 1.02)


def test_target_containing_start_hits_immediately():
    setup = RegressionSetup(N=16, D=16)
    rep = hitting_time_experiment(setup, PriorSpec.isotropic(16), KernelConfig(kind="pCN", beta=0.01),
                                  init=(0.2, 0.1), s=0.5, budget=10, n_replicas=4, seed=0)
    assert rep.hit_times == [0, 0, 0, 0] and rep.n_hits == 4


def test_hitting_time_threads_do_not_change_results():
    setup = RegressionSetup(N=16, D=16, w=WParams(T=contraction_slope(0.1, 16, 16)))
    args = dict(init=(2 / 3, 0.7), s=0.2, budget=300, n_replicas=6, seed=3)
    k = KernelConfig(kind="pCN", beta=0.2)
    a = hitting_time_experiment(setup, PriorSpec.isotropic(16), k, threads=1, **args)
    b = hitting_time_experiment(setup, PriorSpec.isotropic(16), k, threads=3, **args)
    assert a.to_dict() == b.to_dict()


def test_hitting_time_budget_monotone():
    setup = RegressionSetup(N=16, D=16, w=WParams(T=contraction_slope(0.1, 16, 16)))
    k = KernelConfig(kind="pCN", beta=0.3)
    short = hitting_time_experiment(setup, PriorSpec.isotropic(16), k, (2 / 3, 0.7), 0.2, 50, 8, seed=1)
    long = hitting_time_experiment(setup, PriorSpec.isotropic(16), k, (2 / 3, 0.7), 0.2, 500, 8, seed=1)
    for a, ca, b in zip(short.hit_times, short.censored, long.hit_times):
        assert b == a if not ca else b >= a


def test_target_mass_brackets():
    setup = RegressionSetup(N=32, D=32, w=WParams(T=contraction_slope(0.1, 32, 32)))
    rep = hitting_time_experiment(setup, PriorSpec.isotropic(32), KernelConfig(kind="pCN", beta=0.01),
                                  (2 / 3, 0.7), 0.2, 5, 2, seed=0)
    assert rep.target_log_mass_lo <= rep.target_log_mass <= rep.target_log_mass_hi <= 0


# ---------------------------------------------------------------- bottleneck


def test_bottleneck_k0_and_no_violation():
    inst = simulate_tensor(8, 3, 4.0, seed=1)
    k = KernelConfig(kind="SphereRWMH", sphere_step=sphere_step_for(8, 4.0, 3), seed=0)
    rep = bottleneck_bound_check(inst, Bands(0.2, 0.6, 3), k, [0, 10, 100, 1000], n_replicas=40,
                                 n_mc=20_000, seed=0, rejuvenate=20)
    assert rep.empirical[0] == 0.0 and rep.bound[0] == 0.0
    assert not rep.violation


def test_bottleneck_vacuous_without_signal():
    inst = simulate_tensor(8, 3, 0.0, seed=2)
    k = KernelConfig(kind="SphereRWMH", sphere_step=0.3, seed=0)
    # S = southern hemisphere, W = almost all of the northern one: Pi(W) ~ Pi(S)
    rep = bottleneck_bound_check(inst, Bands(0.0, 0.9, 3), k, [0, 1, 10, 100], n_replicas=20,
                                 n_mc=20_000, seed=0, rejuvenate=10)
    assert rep.ratio_W_S == pytest.approx(1.0, abs=0.05)
    assert rep.vacuous_from in (1, 10)
    assert not rep.violation


# ---------------------------------------------------------------- audit


def test_audit_never_entering():
    rep = barrier_reduction_audit([1.0, 0.9, 0.95], [0.1, 0.1, 0.05], s=0.2, eta=0.1, L=1.75)
    assert rep.n_entries == 0 and rep.consistent


def test_audit_teleport():
    rep = barrier_reduction_audit([1.0, 0.1], [0.0, 0.9], s=0.2, eta=0.1, L=1.75, initial_radius=1.0)
    assert rep.n_entries == 1 and rep.step_attributed == 1 and rep.consistent


def test_audit_barrier_crossing():
    rep = barrier_reduction_audit([0.25, 0.19], [0.01, 0.03], s=0.2, eta=0.1, L=1.75, initial_radius=0.27)
    assert rep.barrier_attributed == 1 and rep.consistent


def test_audit_permissive_control_runs():
    # small D so that nearly-independent pCN proposals land in B_s now and then
    D = N = 4
    w = WParams(T=contraction_slope(0.1, D, N))
    setup = RegressionSetup(N=N, D=D, w=w, data_seed=0)
    model = RadialPosterior(setup.dataset().stats(), w, PriorSpec.isotropic(D))
    x0 = cold_start_points(np.random.default_rng(0), 8, D, 2 / 3 + 0.35)
    traces = run_chains(x0, KernelConfig(kind="pCN", beta=0.9, seed=1), model, 2000)
    entries = 0
    for t in traces:
        rep = audit_trace(t, s=0.2, eta=0.1, L=1.75)
        entries += rep.n_entries
        assert rep.unattributed == 0
    assert entries > 0
