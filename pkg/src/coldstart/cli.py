"""Command-line entry point: ``coldstart <subcommand> [--config F] [--seed S] [--out DIR] ...``.

Exit status is 0 on success, 2 for configuration or usage errors and 3 for
numeric faults. Every run writes ``manifest.json`` with the fully resolved
configuration; passing that manifest back as ``--config`` reproduces the
run byte for byte.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .config import REQUIRED, ConfigError, load_file, resolve
from .experiments import (
    RegressionSetup,
    barrier_reduction_audit,
    bottleneck_bound_check,
    contraction_slope,
    cold_start_points,
    hitting_time_experiment,
)
from .measures import (
    free_entropy_profile,
    grid_edges,
    radial_grid_build,
    smallball_scaling_fit,
)
from .plotting import KINDS as PLOT_KINDS, plot_csv
from .priors import PriorSpec
from .radial_model import GSpec, WParams, simulate_dataset
from .reports import PROFILE_HEADER, read_csv, write_csv, write_dataset, write_json
from .rng import STREAM_INIT, derive_seed, make_rng
from .samplers import KernelConfig, RadialPosterior, pcn_beta_cap, run_chains
from .spiked_tensor import (
    Bands,
    averaged_free_entropy_curve,
    contraction_curve,
    posterior_band_masses,
    simulate_tensor,
    sphere_step_for,
    write_tensor,
)

SUBCOMMANDS = (
    "simulate", "run-chain", "hitting-time", "free-entropy", "small-ball",
    "bands", "tensor-contract", "bottleneck", "audit", "plot",
)

MODEL = {
    "model.N": 128, "model.D": 128, "model.d": 1, "model.g": "constant-one",
    "w.T": 2.0, "w.t": 0.1, "w.L": 1.0, "w.rho": 0.1, "w.b": 0.0, "w.auto_T": False,
}
PRIOR = {"prior.variant": "isotropic", "prior.alpha": 1.0, "prior.d": 1, "prior.rescale": 1.0}
KERNEL = {"kernel.kind": "pCN", "kernel.beta": 0.0, "kernel.gamma": 0.005, "kernel.sphere_step": 0.05}
TENSOR = {"tensor.n": 12, "tensor.p": 3, "tensor.lambda": 5.0}

SCHEMAS = {
    "simulate": {**MODEL},
    "run-chain": {**MODEL, **PRIOR, **KERNEL, "chain.iterations": 1000, "chain.init_radius": 1.0,
                  "chain.stop_radius": 0.0, "experiment.replicas": 1},
    "hitting-time": {**MODEL, "w.auto_T": True, **PRIOR, **KERNEL, "experiment.sigma": 2.0 / 3.0,
                     "experiment.eps": 0.7, "experiment.s": 0.2, "experiment.eta": 0.0,
                     "experiment.budget": 2000, "experiment.replicas": 8, "experiment.warm": False},
    "free-entropy": {"model.kind": "averaged", "averaged.lambda": 2.1, "averaged.p": 3,
                     "grid.q_min": -0.99, "grid.q_max": 0.99, "grid.n": 1981,
                     **MODEL, **PRIOR, "grid.r_max": 3.0, "grid.eps": 0.01, "grid.n_mc": 200000},
    "small-ball": {"prior.alpha": 1.0, "prior.d": 1, "prior.rescale": 1.0, "smallball.kappa": 1.0,
                   "smallball.z": [0.5, 0.75, 1.0, 1.5, 2.0], "smallball.N": [64], "smallball.n_mc": 20000},
    "bands": {**TENSOR, "bands.s": 0.2, "bands.t": 0.6, "bands.n_mc": 100000, "bands.proposal": "mixture"},
    "tensor-contract": {"tensor.n": 12, "tensor.p": 3, "contraction.s": 0.5,
                        "contraction.lambdas": [0.0, 2.0, 4.0, 6.0, 8.0], "contraction.seeds": 10,
                        "contraction.n_mc": 20000},
    "bottleneck": {**TENSOR, "bands.s": 0.2, "bands.t": 0.6, "kernel.sphere_step": 0.0,
                   "bottleneck.k": [0, 10, 100, 1000], "bottleneck.n_mc": 50000, "experiment.replicas": 50},
    "audit": {"audit.trace": REQUIRED, "audit.s": 0.2, "audit.eta": 0.1, "audit.L": 1.75},
    "plot": {"plot.input": REQUIRED, "plot.kind": "profile"},
}


class Run:
    def __init__(self, cmd, cfg, seed, out, threads):
        self.cmd, self.cfg, self.seed, self.out, self.threads = cmd, cfg, seed, out, threads
        self.outputs = []

    def path(self, name):
        self.outputs.append(name)
        return os.path.join(self.out, name)


def _wparams(c) -> WParams:
    T = c["w.T"]
    if c.get("w.auto_T"):
        T = max(T, contraction_slope(c["w.t"], c["model.D"], c["model.N"]))
    if c["w.b"] > 0:
        return WParams.scaled(T, c["w.t"], c["w.L"], c["w.rho"], c["w.b"], c["model.N"])
    return WParams(T=T, t=c["w.t"], L=c["w.L"], rho=c["w.rho"])


def _prior(c, D) -> PriorSpec:
    try:
        return PriorSpec(c["prior.variant"], D, c["prior.alpha"], c["prior.d"], c["prior.rescale"])
    except ValueError as err:
        raise ConfigError("prior", str(err)) from None


def _kernel(c, seed, beta_default=None) -> KernelConfig:
    kind = c["kernel.kind"]
    try:
        if kind == "pCN":
            beta = c["kernel.beta"] if c["kernel.beta"] > 0 else beta_default
            if beta is None:
                raise ConfigError("kernel.beta", "must be positive")
            return KernelConfig("pCN", beta=beta, seed=seed)
        if kind == "MALA":
            return KernelConfig("MALA", gamma=c["kernel.gamma"], seed=seed)
        if kind == "SphereRWMH":
            return KernelConfig("SphereRWMH", sphere_step=c["kernel.sphere_step"], seed=seed)
    except ValueError as err:
        raise ConfigError("kernel", str(err)) from None
    raise ConfigError("kernel.kind", f"unknown kernel {kind!r}")


# ---------------------------------------------------------------- subcommands


def cmd_simulate(run: Run):
    c = run.cfg
    data = simulate_dataset(c["model.N"], c["model.D"], GSpec(c["model.g"]), w=_wparams(c),
                            seed=derive_seed(run.seed, 1), d=c["model.d"])
    write_dataset(data, run.path("dataset.csv"), run.path("dataset.json"))
    return dict(N=data.N, D=data.D)


def cmd_run_chain(run: Run):
    c = run.cfg
    w = _wparams(c)
    data = simulate_dataset(c["model.N"], c["model.D"], GSpec(c["model.g"]), w=w, seed=derive_seed(run.seed, 1),
                            d=c["model.d"])
    prior = _prior(c, c["model.D"])
    model = RadialPosterior(data.stats(), w, prior)
    kern = _kernel(c, derive_seed(run.seed, 2), beta_default=0.01)
    R = c["experiment.replicas"]
    x0 = cold_start_points(make_rng(run.seed, STREAM_INIT), R, prior.D, c["chain.init_radius"])
    stop = c["chain.stop_radius"] if c["chain.stop_radius"] > 0 else None
    traces = run_chains(x0, kern, model, c["chain.iterations"], stop_radius=stop)
    summary = []
    for r, tr in enumerate(traces):
        tr.write_csv(run.path(f"chain_{r:03d}.csv"))
        summary.append(dict(chain=r, seed=tr.seed, acceptance=tr.acceptance_rate, hit_time=tr.hit_time,
                            censored=tr.censored, records=tr.n_records))
    return dict(kernel=kern.to_dict(), chains=summary)


def cmd_hitting_time(run: Run):
    c = run.cfg
    w = _wparams(c)
    prior = _prior(c, c["model.D"])
    s, sigma, eps = c["experiment.s"], c["experiment.sigma"], c["experiment.eps"]
    eta = c["experiment.eta"] if c["experiment.eta"] > 0 else s / 2.0
    L_assump = 1.0 + eps + 0.05
    kern = _kernel(c, 0, beta_default=0.9 * pcn_beta_cap(eta, L_assump))
    setup = RegressionSetup(c["model.N"], c["model.D"], w, c["model.g"], data_seed=derive_seed(run.seed, 1))
    rep = hitting_time_experiment(setup, prior, kern, (sigma, eps), s, c["experiment.budget"],
                                  c["experiment.replicas"], seed=run.seed, eta=eta, warm=c["experiment.warm"],
                                  threads=run.threads)
    rows = [(i, rep.hit_times[i], int(rep.censored[i]), rep.min_radius[i], rep.max_radius[i], rep.acceptance[i],
             rep.exceed_counts[i]) for i in range(len(rep.hit_times))]
    csv_path = run.path("hitting_times.csv")
    write_csv(csv_path, ["replica", "hit_time", "censored", "min_radius", "max_radius", "acceptance", "exceed"], rows)
    write_json(run.path("hitting_time.json"), rep.to_dict())
    plot_csv(csv_path, "survival", run.path("survival.svg"))
    return dict(n_hits=rep.n_hits, target_mass_lower=rep.target_mass_lower, T=w.T, beta=kern.beta)


def cmd_free_entropy(run: Run):
    c = run.cfg
    kind = c["model.kind"]
    if kind == "averaged":
        lam, p = c["averaged.lambda"], c["averaged.p"]
        if not -1 < c["grid.q_min"] < c["grid.q_max"] < 1:
            raise ConfigError("grid.q_min", "need -1 < q_min < q_max < 1")
        q = np.linspace(c["grid.q_min"], c["grid.q_max"], c["grid.n"])
        curve = averaged_free_entropy_curve(lam, p, q)
        dq = float(q[1] - q[0]) if len(q) > 1 else 0.0
        energy = 0.5 * lam * q**p
        entropy = 0.5 * np.log1p(-q * q)
        rows = [(q[k], dq, curve.F[k], energy[k], entropy[k], 0.0) for k in range(len(q))]
        extra = dict(maxima=curve.maxima, minima=curve.minima)
    elif kind == "radial":
        w = _wparams(c)
        prior = _prior(c, c["model.D"])
        data = simulate_dataset(c["model.N"], c["model.D"], GSpec(c["model.g"]), w=w,
                                seed=derive_seed(run.seed, 1), d=c["model.d"])
        edges = grid_edges(c["grid.r_max"], c["grid.eps"], tail=False)
        grid = radial_grid_build(prior, data.stats(), w, edges, n_mc=c["grid.n_mc"], seed=derive_seed(run.seed, 2))
        prof = free_entropy_profile(grid)
        rows = list(prof.rows())
        extra = dict(maxima=prof.r[prof.local_maxima()].tolist(), minima=prof.r[prof.local_minima()].tolist())
    else:
        raise ConfigError("model.kind", f"expected 'averaged' or 'radial', got {kind!r}")
    csv_path = run.path("profile.csv")
    write_csv(csv_path, PROFILE_HEADER, rows)
    plot_csv(csv_path, "profile", run.path("profile.svg"))
    write_json(run.path("critical_points.json"), extra)
    return extra


def cmd_small_ball(run: Run):
    c = run.cfg
    spec = _prior({"prior.variant": "alpha_regular", **c}, 1)
    fit = smallball_scaling_fit(spec, c["smallball.z"], c["smallball.N"], c["smallball.kappa"],
                                n_mc=c["smallball.n_mc"], seed=derive_seed(run.seed, 1))
    write_csv(run.path("smallball.csv"), ["N", "D", "z", "log_p", "stderr", "chernoff", "failed"],
              [(p["N"], p["D"], p["z"], p["log_p"], p["stderr"], p["chernoff"], int(p["failed"])) for p in fit.points])
    res = dict(tau_hat=fit.tau_hat, slope=fit.slope, slope_stderr=fit.slope_stderr, tau=spec.tau)
    write_json(run.path("smallball.json"), res)
    return res


def _tensor(c, seed):
    try:
        return simulate_tensor(c["tensor.n"], c["tensor.p"], c["tensor.lambda"], seed=seed)
    except (ValueError, MemoryError) as err:
        raise ConfigError("tensor", str(err)) from None


def _bands(c):
    try:
        return Bands(c["bands.s"], c["bands.t"], c["tensor.p"])
    except ValueError as err:
        raise ConfigError("bands", str(err)) from None


def cmd_bands(run: Run):
    c = run.cfg
    inst = _tensor(c, derive_seed(run.seed, 1))
    bands = _bands(c)
    rep = posterior_band_masses(inst, bands, c["bands.n_mc"], seed=derive_seed(run.seed, 2),
                                proposal=c["bands.proposal"])
    prior = bands.prior_masses(inst.n)
    write_csv(run.path("bands.csv"), ["band", "prior_mass", "posterior_mass", "stderr"],
              [("S", prior[0], rep.S, rep.se_S), ("W", prior[1], rep.W, rep.se_W), ("T", prior[2], rep.T, rep.se_T)])
    write_tensor(inst, run.path("tensor.bin"))
    res = dict(S=rep.S, W=rep.W, T=rep.T, ratio_S_T=rep.ratio_S_T, ess=rep.ess, ess_ok=rep.ess_ok)
    write_json(run.path("bands.json"), res)
    return res


def cmd_tensor_contract(run: Run):
    c = run.cfg
    seeds = [derive_seed(run.seed, 10 + k) for k in range(c["contraction.seeds"])]
    cur = contraction_curve(c["tensor.n"], c["tensor.p"], c["contraction.lambdas"], c["contraction.s"],
                            n_mc=c["contraction.n_mc"], seeds=seeds)
    write_csv(run.path("contraction.csv"), ["lambda", "mean_T", "stderr_T"],
              zip(cur.lams, cur.mean_T, cur.stderr_T))
    res = dict(mean_T=cur.mean_T.tolist(), prior_T=cur.prior_T, min_ess=cur.min_ess)
    write_json(run.path("contraction.json"), res)
    return res


def cmd_bottleneck(run: Run):
    c = run.cfg
    inst = _tensor(c, derive_seed(run.seed, 1))
    h = c["kernel.sphere_step"] if c["kernel.sphere_step"] > 0 else sphere_step_for(inst.n, inst.lam, inst.p)
    if not math.isfinite(h):
        h = 0.1
    kern = KernelConfig("SphereRWMH", sphere_step=h, seed=0)
    rep = bottleneck_bound_check(inst, _bands(c), kern, c["bottleneck.k"], c["experiment.replicas"],
                                 n_mc=c["bottleneck.n_mc"], seed=derive_seed(run.seed, 2))
    csv_path = run.path("bottleneck.csv")
    write_csv(csv_path, ["k", "empirical", "stderr", "bound"], zip(rep.k_grid, rep.empirical, rep.stderr, rep.bound))
    write_json(run.path("bottleneck.json"), rep.to_dict())
    plot_csv(csv_path, "bound-overlay", run.path("bottleneck.svg"))
    return dict(violation=rep.violation, vacuous_from=rep.vacuous_from, sphere_step=h)


def cmd_audit(run: Run):
    c = run.cfg
    try:
        header, rows = read_csv(c["audit.trace"])
    except OSError as err:
        raise ConfigError("audit.trace", f"cannot read trace: {err.strerror}") from None
    except ValueError as err:
        raise ConfigError("audit.trace", str(err)) from None
    for col in ("radius", "step_norm"):
        if rows and col not in header:
            raise ConfigError("audit.trace", f"trace has no {col!r} column")
    r = [row[header.index("radius")] for row in rows] if rows else []
    st = [row[header.index("step_norm")] for row in rows] if rows else []
    rep = barrier_reduction_audit(r, st, c["audit.s"], c["audit.eta"], c["audit.L"])
    res = dict(n_entries=rep.n_entries, step_attributed=rep.step_attributed,
               barrier_attributed=rep.barrier_attributed, unattributed=rep.unattributed,
               exits_beyond_L=rep.exits_beyond_L, small_step_fraction=rep.small_step_fraction,
               consistent=rep.consistent)
    write_json(run.path("audit.json"), res)
    return res


def cmd_plot(run: Run):
    c = run.cfg
    if c["plot.kind"] not in PLOT_KINDS:
        raise ConfigError("plot.kind", f"expected one of {PLOT_KINDS}")
    stem = os.path.splitext(os.path.basename(c["plot.input"]))[0]
    try:
        n = plot_csv(c["plot.input"], c["plot.kind"], run.path(f"{stem}.svg"))
    except OSError as err:
        raise ConfigError("plot.input", f"cannot read {c['plot.input']}: {err.strerror}") from None
    except ValueError as err:
        raise ConfigError("plot.input", str(err)) from None
    return dict(curves=n)


HANDLERS = {
    "simulate": cmd_simulate, "run-chain": cmd_run_chain, "hitting-time": cmd_hitting_time,
    "free-entropy": cmd_free_entropy, "small-ball": cmd_small_ball, "bands": cmd_bands,
    "tensor-contract": cmd_tensor_contract, "bottleneck": cmd_bottleneck, "audit": cmd_audit, "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coldstart", description="Entropic-barrier MCMC experiments.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--seed", type=int, metavar="U64")
        sp.add_argument("--out", metavar="DIR", default=".")
        sp.add_argument("--threads", type=int, default=1, metavar="N")
        sp.add_argument("--replicas", type=int, metavar="N")
        if name == "plot":
            sp.add_argument("input", nargs="?", help="CSV file to render")
            sp.add_argument("--kind", choices=PLOT_KINDS)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        given, man_seed = load_file(args.config) if args.config else ({}, None)
        if args.cmd == "plot":
            if args.input:
                given["plot.input"] = args.input
            if args.kind:
                given["plot.kind"] = args.kind
        if args.replicas is not None:
            if "experiment.replicas" not in SCHEMAS[args.cmd]:
                raise ConfigError("--replicas", f"not used by {args.cmd}")
            given["experiment.replicas"] = args.replicas
        cfg = resolve(SCHEMAS[args.cmd], given)
        seed = args.seed if args.seed is not None else (man_seed if man_seed is not None else 0)
        if not 0 <= seed < 2**64:
            raise ConfigError("--seed", "must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads", "must be at least 1")
        os.makedirs(args.out, exist_ok=True)
        run = Run(args.cmd, cfg, seed, args.out, args.threads)
        result = HANDLERS[args.cmd](run)
        write_json(os.path.join(args.out, "manifest.json"),
                   dict(subcommand=args.cmd, seed=seed, version=__version__, config=cfg,
                        outputs=run.outputs, result=result))
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except ArithmeticError as err:
        print(f"numeric fault: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
