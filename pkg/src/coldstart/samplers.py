"""Metropolis kernels and a batched chain engine.

Kernels:

* pCN: ``p = sqrt(1 - beta) x + sqrt(beta) xi``, ``xi ~ N(0, C)`` with C the
  prior covariance; accepted with probability ``min(1, exp(l(p) - l(x)))``.
* MALA on the posterior: ``p = x + gamma grad log pi(x) + sqrt(2 gamma) xi``
  with the Hastings correction for the Gaussian proposal of variance 2 gamma.
* SphereRWMH: ``p = (x + h zeta) / |x + h zeta|`` on the unit sphere, plain
  Metropolis (the proposal kernel is symmetric).

Each ``*_step`` is a pure function of the state and explicitly supplied
noise; ``run_chains`` draws the noise from per-chain streams in fixed-size
blocks, so a batch of R chains reproduces R single-chain runs exactly.
"""

from dataclasses import asdict, dataclass
import math

import numpy as np

from .priors import PriorSpec
from .radial_model import SufficientStats, WParams, eval_w, grad_loglik_stats
from .rng import STREAM_CHAIN, STREAM_PROBE, derive_seed, make_rng

PCN = "pCN"
MALA = "MALA"
SPHERE = "SphereRWMH"
KINDS = (PCN, MALA, SPHERE)
_PARAM = {PCN: "beta", MALA: "gamma", SPHERE: "sphere_step"}


class NumericFault(ArithmeticError):
    """A kernel produced a non-finite log-density or gradient."""


@dataclass(frozen=True)
class KernelConfig:
    kind: str
    beta: float = None
    gamma: float = None
    sphere_step: float = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        need = _PARAM[self.kind]
        for name in _PARAM.values():
            val = getattr(self, name)
            if name == need and val is None:
                raise ValueError(f"kernel {self.kind} requires {name}")
            if name != need and val is not None:
                raise ValueError(f"kernel {self.kind} does not take {name}")
        if self.kind == PCN and not (0 < self.beta <= 1):
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.kind == MALA and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.kind == SPHERE and not self.sphere_step > 0:
            raise ValueError(f"sphere_step must be positive, got {self.sphere_step}")

    @property
    def step(self) -> float:
        return getattr(self, _PARAM[self.kind])

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


# ---------------------------------------------------------------- model closures


class RadialPosterior:
    """Posterior closures for the radial regression model.

    Works on batches ``(R, D)``; the likelihood is evaluated through the
    sufficient statistics, so each call costs O(R D).
    """

    def __init__(self, stats: SufficientStats, w: WParams, prior: PriorSpec):
        self.stats = stats
        self.w = w
        self.prior = prior
        self.D = prior.D
        self._inv_var = 1.0 / prior.variances
        self._std = prior.std

    def loglik(self, x: np.ndarray) -> np.ndarray:
        r = np.sqrt(np.einsum("...i,...i->...", x, x))
        return self.stats.profile(eval_w(r, self.w))

    def logprior(self, x: np.ndarray) -> np.ndarray:
        return -0.5 * np.einsum("...i,...i->...", x * x, self._inv_var)

    def logpost(self, x: np.ndarray) -> np.ndarray:
        """Unnormalised log posterior density."""
        return self.loglik(x) + self.logprior(x)

    def grad_logpost(self, x: np.ndarray) -> np.ndarray:
        return grad_loglik_stats(x, self.stats, self.w) - x * self._inv_var

    def summary(self, x: np.ndarray) -> np.ndarray:
        return np.sqrt(np.einsum("...i,...i->...", x, x))

    def prior_noise(self, rng, shape) -> np.ndarray:
        return rng.standard_normal(tuple(shape) + (self.D,)) * self._std


# ---------------------------------------------------------------- pure kernels


@dataclass
class StepResult:
    state: np.ndarray
    accepted: np.ndarray
    proposal: np.ndarray
    value: np.ndarray  # log-likelihood (pCN, sphere) or log-posterior (MALA) at the new state
    grad: np.ndarray = None  # MALA only: gradient at the new state


def _check_finite(vals, what):
    if not np.all(np.isfinite(vals)):
        bad = np.flatnonzero(~np.isfinite(np.atleast_1d(vals)))
        raise NumericFault(f"non-finite {what} for chain(s) {bad.tolist()}")


def pcn_step(state, xi, log_u, beta: float, loglik, cur_ll=None) -> StepResult:
    """One pCN step with prior-scaled noise ``xi`` and ``log_u = log U(0, 1)``.

    The prior factor cancels, so only the log-likelihood enters the ratio.
    """
    state = np.asarray(state, dtype=float)
    cur_ll = loglik(state) if cur_ll is None else cur_ll
    prop = math.sqrt(1.0 - beta) * state + math.sqrt(beta) * xi
    prop_ll = loglik(prop)
    _check_finite(prop_ll, "log-likelihood")
    acc = np.asarray(log_u < prop_ll - cur_ll)
    acc = acc | (np.asarray(prop_ll) >= np.asarray(cur_ll))
    new = np.where(acc[..., None], prop, state)
    return StepResult(new, acc, prop, np.where(acc, prop_ll, cur_ll))


def mala_log_q(y, x, grad_x, gamma: float):
    """Log proposal density ``q(x -> y)`` up to a constant shared by both directions."""
    d = y - x - gamma * grad_x
    return -np.einsum("...i,...i->...", d, d) / (4.0 * gamma)


def mala_step(state, xi, log_u, gamma: float, logpost, grad_logpost, cur=None) -> StepResult:
    """One MALA step with standard normal ``xi``.

    ``cur`` may carry ``(logpost(state), grad_logpost(state))`` from the
    previous step.
    """
    state = np.asarray(state, dtype=float)
    if cur is None:
        cur = (logpost(state), grad_logpost(state))
    cur_lp, cur_g = cur
    prop = state + gamma * cur_g + math.sqrt(2.0 * gamma) * xi
    prop_lp = logpost(prop)
    prop_g = grad_logpost(prop)
    _check_finite(prop_lp, "log-posterior")
    _check_finite(prop_g, "gradient")
    log_a = prop_lp - cur_lp + mala_log_q(state, prop, prop_g, gamma) - mala_log_q(prop, state, cur_g, gamma)
    acc = np.asarray(log_u < log_a)
    new = np.where(acc[..., None], prop, state)
    return StepResult(new, acc, prop, np.where(acc, prop_lp, cur_lp), np.where(acc[..., None], prop_g, cur_g))


def sphere_propose(state, zeta, h: float):
    y = state + h * zeta
    nrm = np.linalg.norm(y, axis=-1, keepdims=True)
    return y / nrm, nrm[..., 0]


def sphere_rwmh_step(state, zeta, log_u, h: float, loglik, cur_ll=None) -> StepResult:
    """One Metropolis step on the sphere with proposal ``normalize(x + h zeta)``."""
    state = np.asarray(state, dtype=float)
    cur_ll = loglik(state) if cur_ll is None else cur_ll
    prop, nrm = sphere_propose(state, zeta, h)
    if np.any(nrm == 0):
        raise NumericFault("degenerate sphere proposal (zero vector)")
    prop_ll = loglik(prop)
    _check_finite(prop_ll, "log-likelihood")
    acc = np.asarray(log_u < prop_ll - cur_ll)
    new = np.where(acc[..., None], prop, state)
    return StepResult(new, acc, prop, np.where(acc, prop_ll, cur_ll))


# ---------------------------------------------------------------- rng wrappers


def pcn_step_rng(state, model: RadialPosterior, beta: float, rng) -> StepResult:
    state = np.asarray(state, dtype=float)
    xi = model.prior_noise(rng, state.shape[:-1])
    return pcn_step(state, xi, np.log(rng.random(state.shape[:-1])), beta, model.loglik)


def mala_step_rng(state, model, gamma: float, rng) -> StepResult:
    state = np.asarray(state, dtype=float)
    xi = rng.standard_normal(state.shape)
    return mala_step(state, xi, np.log(rng.random(state.shape[:-1])), gamma, model.logpost, model.grad_logpost)


def sphere_rwmh_step_rng(state, model, h: float, rng) -> StepResult:
    state = np.asarray(state, dtype=float)
    zeta = rng.standard_normal(state.shape)
    while True:
        y = state + h * zeta
        bad = np.linalg.norm(y, axis=-1) == 0
        if not np.any(bad):
            break
        zeta[bad] = rng.standard_normal((int(bad.sum()), state.shape[-1]))
    return sphere_rwmh_step(state, zeta, np.log(rng.random(state.shape[:-1])), h, model.loglik)


# ---------------------------------------------------------------- engine


@dataclass
class ChainTrace:
    """Per-step records of one chain.

    Record ``k`` (0-based) describes the state after step ``k + 1``.
    ``hit_time`` is the first step index at which the stop region was
    entered (0 if the initial point is inside), or ``iterations`` with
    ``censored = True`` when the budget ran out.
    """

    radius: np.ndarray
    accepted: np.ndarray
    step_norm: np.ndarray
    initial: np.ndarray
    final: np.ndarray
    iterations: int
    hit_time: int = None
    censored: bool = False
    states: np.ndarray = None
    thin: int = 0
    seed: int = 0
    fault: str = None
    initial_summary: float = math.nan

    @property
    def n_records(self) -> int:
        return len(self.radius)

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean()) if len(self.accepted) else math.nan

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("k,radius,accepted,step_norm\n")
            for k in range(self.n_records):
                fh.write(f"{k + 1},{float(self.radius[k])!r},{int(self.accepted[k])},{float(self.step_norm[k])!r}\n")


def _noise_block(kind, model, rng, B, D):
    if kind == PCN:
        xi = model.prior_noise(rng, (B,))
    else:
        xi = rng.standard_normal((B, D))
    return xi, np.log(rng.random(B))


def run_chains(
    initial,
    config: KernelConfig,
    model,
    iterations: int,
    stop=None,
    stop_radius: float = None,
    thin: int = 0,
    block: int = 512,
    on_fault: str = "raise",
    chain_offset: int = 0,
) -> list:
    """Run R independent chains from the rows of ``initial``.

    Chain ``r`` draws its noise from
    ``make_rng(config.seed, STREAM_CHAIN, chain_offset + r)``, so splitting a
    set of replicas into chunks does not change any chain.
    ``stop`` is a predicate on states returning a boolean mask;
    ``stop_radius`` is shorthand for ``summary(x) <= stop_radius``. A chain
    that enters the stop region halts; its remaining budget is not used.
    With ``on_fault="record"`` a chain hitting a numeric fault is frozen and
    the message stored on its trace instead of raising.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if on_fault not in ("raise", "record"):
        raise ValueError("on_fault must be 'raise' or 'record'")
    X = np.array(initial, dtype=float, ndmin=2)
    R, D = X.shape
    kind = config.kind
    if stop is None and stop_radius is not None:
        stop = lambda x: model.summary(x) <= stop_radius
    rngs = [make_rng(config.seed, STREAM_CHAIN, chain_offset + r) for r in range(R)]
    seeds = [derive_seed(config.seed, STREAM_CHAIN, chain_offset + r) for r in range(R)]

    radius = np.empty((R, iterations))
    accepted = np.zeros((R, iterations), dtype=bool)
    step_norm = np.zeros((R, iterations))
    n_rec = np.full(R, iterations)
    hit = np.full(R, -1)
    faults = [None] * R
    kept = [[] for _ in range(R)] if thin else None

    init_summary = model.summary(X)
    active = np.ones(R, dtype=bool)
    if stop is not None:
        inside = np.asarray(stop(X), dtype=bool)
        hit[inside] = 0
        n_rec[inside] = 0
        active &= ~inside

    if kind == MALA:
        cur = model.logpost(X)
        cur_g = model.grad_logpost(X)
    else:
        cur = model.loglik(X)
    _check_finite(cur, "initial log-density")

    k = 0
    while k < iterations and active.any():
        # always draw whole blocks so a chain's path does not depend on the budget
        B = min(block, iterations - k)
        blocks = [_noise_block(kind, model, rngs[r], block, D) for r in range(R)]
        noise = np.stack([b[0] for b in blocks], axis=1)  # (B, R, D)
        logu = np.stack([b[1] for b in blocks], axis=1)  # (B, R)
        for j in range(B):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            x = X[idx]
            try:
                if kind == PCN:
                    res = pcn_step(x, noise[j, idx], logu[j, idx], config.beta, model.loglik, cur[idx])
                elif kind == MALA:
                    res = mala_step(x, noise[j, idx], logu[j, idx], config.gamma, model.logpost,
                                    model.grad_logpost, (cur[idx], cur_g[idx]))
                else:
                    res = sphere_rwmh_step(x, noise[j, idx], logu[j, idx], config.sphere_step, model.loglik, cur[idx])
            except NumericFault as err:
                if on_fault == "raise":
                    raise
                out = _step_isolating(kind, config, model, X, idx, noise[j], logu[j], cur,
                                      cur_g if kind == MALA else None, faults, k + j)
                active &= np.array([f is None for f in faults])
                if out is None:
                    continue
                idx, res = out
                x = X[idx]
            dx = res.state - x
            X[idx] = res.state
            cur[idx] = res.value
            if kind == MALA:
                cur_g[idx] = res.grad
            step = k + j
            radius[idx, step] = model.summary(res.state)
            accepted[idx, step] = res.accepted
            step_norm[idx, step] = np.where(res.accepted, np.linalg.norm(dx, axis=-1), 0.0)
            if thin and (step + 1) % thin == 0:
                for a, r in enumerate(idx):
                    kept[r].append(res.state[a].copy())
            if stop is not None:
                now = np.asarray(stop(res.state), dtype=bool)
                if now.any():
                    done = idx[now]
                    hit[done] = step + 1
                    n_rec[done] = step + 1
                    active[done] = False
        k += B

    traces = []
    for r in range(R):
        m = int(n_rec[r])
        if faults[r] is not None:
            m = int(faults[r][1])
        traces.append(
            ChainTrace(
                radius=radius[r, :m].copy(),
                accepted=accepted[r, :m].copy(),
                step_norm=step_norm[r, :m].copy(),
                initial=np.array(initial, dtype=float, ndmin=2)[r].copy(),
                final=X[r].copy(),
                iterations=iterations,
                hit_time=int(hit[r]) if hit[r] >= 0 else (iterations if stop is not None else None),
                censored=bool(stop is not None and hit[r] < 0),
                states=np.array(kept[r]) if thin else None,
                thin=thin,
                seed=seeds[r],
                fault=faults[r][0] if faults[r] is not None else None,
                initial_summary=float(init_summary[r]),
            )
        )
    return traces


def _step_isolating(kind, config, model, X, idx, noise, logu, cur, cur_g, faults, step):
    """Re-run a faulted batch step chain by chain, freezing those that fault."""
    good, states, accs, props, vals, grads = [], [], [], [], [], []
    for r in idx:
        x = X[r : r + 1]
        try:
            if kind == PCN:
                res = pcn_step(x, noise[r : r + 1], logu[r : r + 1], config.beta, model.loglik, cur[r : r + 1])
            elif kind == MALA:
                res = mala_step(x, noise[r : r + 1], logu[r : r + 1], config.gamma, model.logpost,
                                model.grad_logpost, (cur[r : r + 1], cur_g[r : r + 1]))
            else:
                res = sphere_rwmh_step(x, noise[r : r + 1], logu[r : r + 1], config.sphere_step, model.loglik,
                                       cur[r : r + 1])
        except NumericFault as err:
            faults[r] = (str(err), step)
            continue
        good.append(r)
        states.append(res.state[0])
        accs.append(res.accepted[0])
        props.append(res.proposal[0])
        vals.append(res.value[0])
        if kind == MALA:
            grads.append(res.grad[0])
    if not good:
        return None
    return np.array(good), StepResult(np.array(states), np.array(accs), np.array(props), np.array(vals),
                                      np.array(grads) if kind == MALA else None)


def run_chain(initial, config: KernelConfig, model, iterations: int, stop=None, stop_radius: float = None,
              thin: int = 0) -> ChainTrace:
    """Single-chain front end to :func:`run_chains` (chain index 0)."""
    return run_chains(np.asarray(initial, dtype=float)[None, :], config, model, iterations, stop, stop_radius, thin)[0]


# ---------------------------------------------------------------- step-size audit


@dataclass
class StepAssumptionReport:
    max_exceed_freq: float
    mean_exceed_freq: float
    n_probe: int
    n_inner: int
    threshold: float
    worst_state_radius: float


def uniform_ball_radius_points(rng, n: int, D: int, L: float) -> np.ndarray:
    """``n`` points with uniform radius on (0, L) and uniform direction."""
    u = rng.standard_normal((n, D))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return rng.uniform(0.0, L, size=(n, 1)) * u


def step_assumption_estimate(
    config: KernelConfig, model, L: float, eta: float, n_probe: int = 1000, n_inner: int = 100, seed: int = 0,
    chunk: int = 200_000,
) -> StepAssumptionReport:
    """Estimate ``sup_{|x| <= L} P(|X_1 - x| >= eta / 2 | X_0 = x)``.

    ``n_probe`` states are drawn in the ball (uniform radius, uniform
    direction) and each is moved ``n_inner`` times by one kernel step. The
    maximum over probes of the exceedance frequency is an estimate, not a
    certificate, of the supremum.
    """
    if not (L > 0 and eta > 0):
        raise ValueError("L and eta must be positive")
    rng = make_rng(seed, STREAM_PROBE)
    D = model.D
    pts = uniform_ball_radius_points(rng, n_probe, D, L)
    thr = eta / 2.0
    freqs = np.empty(n_probe)
    per = max(1, chunk // (n_inner * max(D, 1) // 64 + 1))
    for lo in range(0, n_probe, per):
        hi = min(n_probe, lo + per)
        x = np.repeat(pts[lo:hi], n_inner, axis=0)
        if config.kind == PCN:
            res = pcn_step_rng(x, model, config.beta, rng)
        elif config.kind == MALA:
            res = mala_step_rng(x, model, config.gamma, rng)
        else:
            x = x / np.linalg.norm(x, axis=1, keepdims=True)
            res = sphere_rwmh_step_rng(x, model, config.sphere_step, rng)
        moved = np.linalg.norm(res.state - x, axis=1) >= thr
        freqs[lo:hi] = moved.reshape(hi - lo, n_inner).mean(axis=1)
    k = int(np.argmax(freqs))
    return StepAssumptionReport(
        max_exceed_freq=float(freqs.max()),
        mean_exceed_freq=float(freqs.mean()),
        n_probe=n_probe,
        n_inner=n_inner,
        threshold=thr,
        worst_state_radius=float(np.linalg.norm(pts[k])),
    )


def pcn_beta_cap(eta: float, L: float) -> float:
    """``min(1/2, eta / (4 L), eta^2 / 64)``, the pCN step ceiling for small moves."""
    return min(0.5, eta / (4.0 * L), eta * eta / 64.0)
