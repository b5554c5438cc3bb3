"""Hitting-time, bottleneck and trace-audit experiments.

Each experiment is a pure function of its configuration and master seed;
replicas can be fanned out over threads without changing any result,
because every chain owns a seed stream keyed by its global index.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import math

import numpy as np

from .measures import (
    grid_edges,
    isotropic_ball_prob,
    posterior_region_log_mass,
    radial_grid_build,
)
from .priors import PriorSpec
from .radial_model import GSpec, WParams, simulate_dataset
from .rng import STREAM_INIT, derive_seed, make_rng
from .samplers import KernelConfig, RadialPosterior, run_chains, sphere_propose
from .spiked_tensor import Bands, TensorInstance, TensorPosterior, posterior_band_masses


# ---------------------------------------------------------------- configuration helpers


@dataclass(frozen=True)
class RegressionSetup:
    N: int
    D: int
    w: WParams = field(default_factory=WParams)
    g: str = "constant-one"
    data_seed: int = 0

    def dataset(self):
        return simulate_dataset(self.N, self.D, GSpec(self.g), w=self.w, seed=self.data_seed)


def contraction_slope(t: float, D: int, N: int, margin: float = 1.0) -> float:
    """Steep-segment slope T making the ball of radius t/2 dominate the prior bulk.

    Inside that ball ``w <= (T t)^2`` while beyond t it is at least
    ``(T t)^2 + T t / 2``, so the posterior prefers the ball once
    ``N T t / 4`` beats the entropic cost ``-log Pi(|theta| <= t/2)``.
    ``margin`` adds ``margin * N`` nats of slack.
    """
    cost = -isotropic_ball_prob(D, t / 2.0).log / N
    return 4.0 * (margin + cost) / t


def cold_start_points(rng, count: int, D: int, radius: float) -> np.ndarray:
    """Points uniformly distributed on the sphere of the given radius."""
    x = rng.standard_normal((count, D))
    return radius * x / np.linalg.norm(x, axis=1, keepdims=True)


def _grid_for(w: WParams, s: float, r_max: float = 4.0) -> np.ndarray:
    # fine cells below s where the ramp is steep, then a coarse tail
    fine = min(s, w.t) / 2000.0
    edges = grid_edges(r_max, 0.01, tail=True, fine_to=s, fine_eps=fine)
    return edges


def posterior_radius_sample(rng, grid, count: int, D: int, r_hi: float) -> np.ndarray:
    """Posterior draws restricted to ``|theta| < r_hi`` from the radial grid.

    Cells are chosen in proportion to ``exp(l_mid) * mass``; the radius is
    uniform inside the cell and the direction uniform.
    """
    cells = np.flatnonzero(grid.edges[1:] <= r_hi + 1e-15)
    lw = grid.ell_mid[cells] + grid.log_mass[cells]
    pw = np.exp(lw - lw.max())
    pw /= pw.sum()
    k = rng.choice(cells, size=count, p=pw)
    r = grid.edges[k] + (grid.edges[k + 1] - grid.edges[k]) * rng.random(count)
    x = rng.standard_normal((count, D))
    return r[:, None] * x / np.linalg.norm(x, axis=1, keepdims=True)


def _run_threaded(initial, config, model, budget, stop_radius, threads):
    R = len(initial)
    threads = max(1, int(threads))
    if threads == 1 or R == 1:
        return run_chains(initial, config, model, budget, stop_radius=stop_radius, on_fault="record")
    bounds = np.linspace(0, R, min(threads, R) + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as ex:
        futs = [
            ex.submit(run_chains, initial[a:b], config, model, budget, None, stop_radius, 0, 512, "record", int(a))
            for a, b in zip(bounds[:-1], bounds[1:])
            if b > a
        ]
        out = []
        for f in futs:
            out.extend(f.result())
    return out


# ---------------------------------------------------------------- hitting times


@dataclass
class HittingTimeReport:
    hit_times: list
    censored: list
    min_radius: list
    max_radius: list
    acceptance: list
    exceed_counts: list
    faults: list
    target_log_mass: float
    target_log_mass_lo: float
    target_log_mass_hi: float
    budget: int
    config: dict

    @property
    def n_hits(self) -> int:
        return int(sum(not c for c in self.censored))

    @property
    def target_mass(self) -> float:
        return math.exp(self.target_log_mass)

    @property
    def target_mass_lower(self) -> float:
        return math.exp(self.target_log_mass_lo)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_hits"] = self.n_hits
        d["target_mass"] = self.target_mass
        d["target_mass_lower"] = self.target_mass_lower
        return d


def hitting_time_experiment(
    setup: RegressionSetup,
    prior: PriorSpec,
    kernel: KernelConfig,
    init: tuple,
    s: float,
    budget: int,
    n_replicas: int,
    seed: int = 0,
    eta: float = None,
    warm: bool = False,
    threads: int = 1,
) -> HittingTimeReport:
    """Run ``n_replicas`` chains and record hitting times of ``B_s``.

    ``init = (sigma, eps)`` places cold starts uniformly on the sphere of
    radius ``sigma + eps/2``. With ``warm=True`` chains instead start from
    the posterior restricted to ``B_s`` and run the full budget without
    stopping (the control experiment). ``Pi(B_s | Z)`` is computed on the
    same dataset by radial quadrature, with rigorous lower and upper
    brackets from the within-cell likelihood range.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    sigma, eps = init
    eta = s / 2.0 if eta is None else eta
    data = setup.dataset()
    stats = data.stats()
    model = RadialPosterior(stats, setup.w, prior)
    grid = radial_grid_build(prior, stats, setup.w, _grid_for(setup.w, s), seed=seed,
                             exact=prior.variant == "isotropic")
    mass = posterior_region_log_mass(grid, (0.0, s))
    rng = make_rng(seed, STREAM_INIT)
    if warm:
        x0 = posterior_radius_sample(rng, grid, n_replicas, prior.D, s)
    else:
        x0 = cold_start_points(rng, n_replicas, prior.D, sigma + eps / 2.0)
    cfg = KernelConfig(**{**kernel.to_dict(), "seed": derive_seed(seed, kernel.seed)})
    traces = _run_threaded(x0, cfg, model, budget, None if warm else s, threads)
    rep = HittingTimeReport(
        hit_times=[int(t.hit_time) if t.hit_time is not None else budget for t in traces],
        censored=[bool(t.censored) if not warm else True for t in traces],
        min_radius=[float(min(t.initial_summary, t.radius.min() if t.n_records else math.inf)) for t in traces],
        max_radius=[float(max(t.initial_summary, t.radius.max() if t.n_records else -math.inf)) for t in traces],
        acceptance=[t.acceptance_rate for t in traces],
        exceed_counts=[int(np.sum(t.step_norm >= eta / 2.0)) for t in traces],
        faults=[t.fault for t in traces],
        target_log_mass=float(mass.mid),
        target_log_mass_lo=float(mass.lo),
        target_log_mass_hi=float(mass.hi),
        budget=budget,
        config=dict(setup=dict(N=setup.N, D=setup.D, w=setup.w.to_dict(), g=setup.g, data_seed=setup.data_seed),
                    prior=prior.to_dict(), kernel=kernel.to_dict(), sigma=sigma, eps=eps, s=s, eta=eta,
                    warm=warm, n_replicas=n_replicas, seed=seed),
    )
    if warm:
        rep.hit_times = [0] * n_replicas
    return rep


# ---------------------------------------------------------------- bottleneck


@dataclass
class BottleneckReport:
    k_grid: list
    empirical: list
    stderr: list
    bound: list
    violation: bool
    vacuous_from: int
    ratio_W_S: float
    band_masses: tuple
    ess: float
    n_replicas: int
    hit_times: list
    censored: list

    def to_dict(self) -> dict:
        return asdict(self)


def conditional_start(inst: TensorInstance, bands: Bands, count: int, n_mc: int, seed: int,
                      h: float, rejuvenate: int = 200):
    """Draws approximately from ``Pi(. | Y)`` conditioned on ``S_s``.

    Sampling-importance-resampling from the band-mass importance draws,
    keeping only draws in S, followed by ``rejuvenate`` steps of sphere
    Metropolis restricted to S (moves leaving S are rejected).
    """
    rep = posterior_band_masses(inst, bands, n_mc, seed=seed, keep_draws=True)
    inS = bands.in_S(rep.q)
    if not inS.any():
        raise RuntimeError("no importance draws fell in the starting band S")
    lw = np.where(inS, rep.log_weights, -np.inf)
    pw = np.exp(lw - lw[inS].max())
    pw /= pw.sum()
    rng = make_rng(seed, STREAM_INIT, 1)
    x = rep.draws[rng.choice(len(pw), size=count, p=pw)].copy()
    model = TensorPosterior(inst)
    ll = model.loglik(x)
    for _ in range(rejuvenate):
        prop, _n = sphere_propose(x, rng.standard_normal(x.shape), h)
        pll = model.loglik(prop)
        acc = bands.in_S(prop @ inst.theta0) & (np.log(rng.random(count)) < pll - ll)
        x[acc] = prop[acc]
        ll[acc] = pll[acc]
    return x, rep


def bottleneck_bound_check(
    inst: TensorInstance,
    bands: Bands,
    kernel: KernelConfig,
    k_grid,
    n_replicas: int,
    n_mc: int = 100_000,
    seed: int = 0,
    rejuvenate: int = 200,
    threads: int = 1,
) -> BottleneckReport:
    """Compare the empirical ``Pr(tau_T <= k)`` with ``k Pi(W | Y) / Pi(S | Y)``.

    Chains start from the posterior conditioned on S (see
    :func:`conditional_start`) and stop on entering T. A violation is
    flagged if the empirical curve exceeds the bound by more than three
    binomial standard errors at any k.
    """
    k_grid = sorted(int(k) for k in k_grid)
    if kernel.kind != "SphereRWMH":
        raise ValueError("the bottleneck experiment runs on the sphere")
    x0, rep = conditional_start(inst, bands, n_replicas, n_mc, seed, kernel.sphere_step, rejuvenate)
    model = TensorPosterior(inst)
    budget = max(1, k_grid[-1])
    cfg = KernelConfig(kind="SphereRWMH", sphere_step=kernel.sphere_step, seed=derive_seed(seed, kernel.seed))
    stop = lambda x: bands.in_T(model.summary(x))
    traces = run_chains(x0, cfg, model, budget, stop=stop)
    hits = np.array([t.hit_time for t in traces])
    cens = np.array([t.censored for t in traces])
    ratio = rep.W / rep.S if rep.S > 0 else math.inf
    emp, se, bound = [], [], []
    for k in k_grid:
        pk = float(np.mean((hits <= k) & ~cens))
        emp.append(pk)
        se.append(math.sqrt(pk * (1 - pk) / n_replicas))
        bound.append(k * ratio)
    violation = any(e > b + 3 * s_ for e, b, s_ in zip(emp, bound, se))
    vac = next((k for k, b in zip(k_grid, bound) if b >= 1), -1)
    return BottleneckReport(
        k_grid=k_grid, empirical=emp, stderr=se, bound=bound, violation=bool(violation), vacuous_from=int(vac),
        ratio_W_S=float(ratio), band_masses=(rep.S, rep.W, rep.T), ess=rep.ess, n_replicas=n_replicas,
        hit_times=hits.tolist(), censored=cens.tolist(),
    )


# ---------------------------------------------------------------- audit


@dataclass
class AuditReport:
    n_entries: int
    step_attributed: int
    barrier_attributed: int
    unattributed: int
    exits_beyond_L: int
    small_step_fraction: float
    entry_steps: list

    @property
    def consistent(self) -> bool:
        return self.unattributed == 0


def barrier_reduction_audit(radii, step_norms, s: float, eta: float, L: float, initial_radius: float = None) -> AuditReport:
    """Attribute every entry into ``B_s`` to a large step or a barrier visit.

    ``radii[k]`` and ``step_norms[k]`` describe step ``k + 1``; the radius
    before the first step is ``initial_radius`` (defaults to ``radii[0]``).
    An entry at step k is *step-attributed* if that step has norm at least
    ``eta / 2``, otherwise *barrier-attributed* if the previous state lies
    in the shell ``(s, s + eta)``; anything else is unattributed, which the
    triangle inequality rules out for a consistent trace. Exits from the
    ball of radius L are counted, and ``small_step_fraction`` is the share
    of steps taken inside ``B_L`` whose norm stayed below ``eta / 2``.
    """
    r = np.asarray(radii, dtype=float)
    st = np.asarray(step_norms, dtype=float)
    if r.shape != st.shape:
        raise ValueError("radii and step_norms must have equal length")
    if r.size == 0:
        return AuditReport(0, 0, 0, 0, 0, math.nan, [])
    r_prev = np.concatenate([[r[0] if initial_radius is None else initial_radius], r[:-1]])
    entry = (r <= s) & (r_prev > s)
    big = st >= eta / 2.0
    in_barrier = (r_prev > s) & (r_prev < s + eta)
    n_step = int(np.sum(entry & big))
    n_bar = int(np.sum(entry & ~big & in_barrier))
    n_un = int(np.sum(entry & ~big & ~in_barrier))
    exits = int(np.sum((r > L) & (r_prev <= L)))
    inside = r_prev <= L
    frac = float(np.mean(~big[inside])) if inside.any() else math.nan
    return AuditReport(
        n_entries=int(entry.sum()), step_attributed=n_step, barrier_attributed=n_bar, unattributed=n_un,
        exits_beyond_L=exits, small_step_fraction=frac, entry_steps=(np.flatnonzero(entry) + 1).tolist(),
    )


def audit_trace(trace, s: float, eta: float, L: float) -> AuditReport:
    return barrier_reduction_audit(trace.radius, trace.step_norm, s, eta, L, trace.initial_summary)
