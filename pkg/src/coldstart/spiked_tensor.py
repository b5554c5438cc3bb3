"""Spiked tensor model on the unit sphere.

``Y = lam sqrt(n) theta0^{(x)p} + Z`` with Z an i.i.d. standard normal p-tensor
and a uniform prior on S^{n-1}. The log-likelihood (up to a theta-free
constant) is ``1/2 sqrt(n) lam <theta^{(x)p}, Y>``.

Tensors are stored flat in row-major (C) order: entry ``(i_1, ..., i_p)``
sits at ``sum_k i_k n^{p-k}``.
"""

from dataclasses import dataclass, field
import itertools
import math
import struct

import numpy as np

from .measures import band_masses, latitude_log_density
from .rng import STREAM_TENSOR, STREAM_IS, derive_seed, make_rng

MAX_ENTRIES = 10**8


@dataclass(frozen=True)
class TensorInstance:
    n: int
    p: int
    lam: float
    Y: np.ndarray = field(repr=False)
    theta0: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("tensor order p must be at least 2")
        if self.n < 2:
            raise ValueError("dimension n must be at least 2")
        if self.Y.shape != (self.n**self.p,):
            raise ValueError("Y must be a flat array of length n^p")
        if abs(float(np.linalg.norm(self.theta0)) - 1.0) > 1e-12:
            raise ValueError("theta0 must be a unit vector")

    @property
    def cube(self) -> np.ndarray:
        return self.Y.reshape((self.n,) * self.p)

    @property
    def signal_scale(self) -> float:
        return self.lam * math.sqrt(self.n)

    def noise(self) -> np.ndarray:
        """Recover Z = Y - lam sqrt(n) theta0^{(x)p} (flat)."""
        return self.Y - self.signal_scale * outer_power(self.theta0, self.p)


def check_memory(n: int, p: int):
    if n**p > MAX_ENTRIES:
        raise MemoryError(f"n^p = {n}^{p} exceeds the {MAX_ENTRIES:.0e} entry limit")


def outer_power(x: np.ndarray, p: int) -> np.ndarray:
    """Flat ``x^{(x)p}``."""
    out = np.asarray(x, dtype=float)
    for _ in range(p - 1):
        out = np.multiply.outer(out, x).ravel()
    return out


def uniform_sphere(rng, count: int, n: int) -> np.ndarray:
    x = rng.standard_normal((count, n))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def simulate_tensor(n: int, p: int, lam: float, seed: int = 0, theta0=None) -> TensorInstance:
    """Draw theta0 uniformly on the sphere (unless given) and Y."""
    check_memory(n, p)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    rng = make_rng(seed, STREAM_TENSOR)
    t0 = uniform_sphere(rng, 1, n)[0]
    if theta0 is not None:
        t0 = np.asarray(theta0, dtype=float)
        t0 = t0 / np.linalg.norm(t0)
    Z = rng.standard_normal(n**p)
    Y = lam * math.sqrt(n) * outer_power(t0, p) + Z
    return TensorInstance(n=n, p=p, lam=float(lam), Y=Y, theta0=t0, seed=seed)


def contract(T_flat: np.ndarray, n: int, p: int, X: np.ndarray) -> np.ndarray:
    """``<x^{(x)p}, T>`` for each row x of X by p successive mode contractions."""
    X = np.atleast_2d(X)
    A = T_flat.reshape(-1, n) @ X.T  # (n^{p-1}, R)
    for _ in range(p - 1):
        A = A.reshape(-1, n, A.shape[-1])
        A = np.einsum("anr,rn->ar", A, X)
    return A[0]


def _check_unit(theta, tol=1e-9):
    nrm = np.linalg.norm(theta, axis=-1)
    if np.any(np.abs(nrm - 1.0) > tol):
        raise ValueError("theta must lie on the unit sphere")


def tensor_loglik(inst: TensorInstance, theta, chunk: int = 50_000):
    """``1/2 sqrt(n) lam <theta^{(x)p}, Y>`` for one point or a batch of points."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != inst.n:
        raise ValueError(f"theta must have length {inst.n}")
    _check_unit(theta)
    X = np.atleast_2d(theta)
    out = np.empty(len(X))
    for lo in range(0, len(X), chunk):
        out[lo : lo + chunk] = contract(inst.Y, inst.n, inst.p, X[lo : lo + chunk])
    out *= 0.5 * inst.signal_scale
    return float(out[0]) if theta.ndim == 1 else out


def tensor_loglik_flat(inst: TensorInstance, theta) -> float:
    """Same value as :func:`tensor_loglik` via an explicit ``theta^{(x)p}`` (reference path)."""
    theta = np.asarray(theta, dtype=float)
    _check_unit(theta)
    return 0.5 * inst.signal_scale * float(outer_power(theta, inst.p) @ inst.Y)


class TensorPosterior:
    """Sphere-chain closures for the tensor posterior (summary = <theta, theta0>)."""

    def __init__(self, inst: TensorInstance):
        self.inst = inst
        self.D = inst.n

    def loglik(self, x):
        x = np.atleast_2d(x)
        return 0.5 * self.inst.signal_scale * contract(self.inst.Y, self.inst.n, self.inst.p, x)

    def summary(self, x):
        return np.asarray(x) @ self.inst.theta0


# ---------------------------------------------------------------- averaged model


def averaged_loglik(theta, theta0, lam: float, p: int):
    """``lam <theta, theta0>^p / 2``: the per-dimension mean log-likelihood.

    With ``lam`` equal to the square of the tensor signal-to-noise ratio this
    is ``(1/n) E_Z[tensor_loglik]``.
    """
    q = np.asarray(theta, dtype=float) @ np.asarray(theta0, dtype=float)
    out = 0.5 * lam * q**p
    return float(out) if np.ndim(out) == 0 else out


def averaged_free_entropy(q, lam: float, p: int):
    q = np.asarray(q, dtype=float)
    return 0.5 * lam * q**p + 0.5 * np.log1p(-q * q)


def averaged_free_entropy_prime(q, lam: float, p: int):
    q = np.asarray(q, dtype=float)
    return 0.5 * lam * p * q ** (p - 1) - q / (1.0 - q * q)


@dataclass
class AveragedCurve:
    q: np.ndarray
    F: np.ndarray
    dF: np.ndarray
    maxima: list
    minima: list


def averaged_free_entropy_curve(lam: float, p: int, q_grid=None, refine: bool = True) -> AveragedCurve:
    """``F(q) = (lam/2) q^p + 1/2 log(1 - q^2)`` and its interior critical points.

    Critical points are located by sign changes of ``F'`` between grid
    points (and exact zeros on the grid), then refined by Brent's method.
    """
    from scipy.optimize import brentq

    if q_grid is None:
        lo = -0.999 if p % 2 else 0.0
        q_grid = np.linspace(lo, 0.999, 19_981)
    q = np.asarray(q_grid, dtype=float)
    if np.any(np.abs(q) >= 1):
        raise ValueError("q grid must stay inside (-1, 1)")
    F = averaged_free_entropy(q, lam, p)
    dF = averaged_free_entropy_prime(q, lam, p)
    fp = lambda x: float(averaged_free_entropy_prime(x, lam, p))
    crit = []
    sgn = np.sign(dF)
    for k in range(len(q)):
        if dF[k] == 0.0:
            left = sgn[k - 1] if k > 0 else None
            right = sgn[k + 1] if k + 1 < len(q) else None
            crit.append((q[k], left, right))
    for k in range(len(q) - 1):
        if sgn[k] * sgn[k + 1] < 0:
            root = brentq(fp, q[k], q[k + 1], xtol=1e-14) if refine else 0.5 * (q[k] + q[k + 1])
            crit.append((root, sgn[k], sgn[k + 1]))
    maxima, minima = [], []
    for root, left, right in sorted(crit):
        # a grid endpoint zero is classified from the one-sided derivative
        if (left is None or left > 0) and (right is None or right < 0) and not (left is None and right is None):
            maxima.append(float(root))
        elif (left is None or left < 0) and (right is None or right > 0) and not (left is None and right is None):
            minima.append(float(root))
    return AveragedCurve(q=q, F=F, dF=dF, maxima=maxima, minima=minima)


# ---------------------------------------------------------------- injective norm


def symmetrize(T_flat: np.ndarray, n: int, p: int) -> np.ndarray:
    cube = T_flat.reshape((n,) * p)
    perms = list(itertools.permutations(range(p)))
    acc = np.zeros_like(cube)
    for perm in perms:
        acc += cube.transpose(perm)
    return (acc / len(perms)).ravel()


@dataclass
class InjectiveNormEstimate:
    value: float
    normalized: float
    best_x: np.ndarray
    per_restart: np.ndarray
    n_converged: int
    n_restarts: int


def injective_norm_estimate(
    Z, p: int, n_restarts: int = 20, seed: int = 0, max_iter: int = 500, tol: float = 1e-10
) -> InjectiveNormEstimate:
    """Multi-start symmetric power iteration for ``max_{|x|=1} <x^{(x)p}, Z>``.

    ``Z`` may be flat or a cube. Each restart iterates
    ``x <- grad / |grad|`` with ``grad = p Zsym(., x, ..., x)`` until the
    update moves less than ``tol``; the best value seen along each path is
    kept, so the result is a lower bound on the true maximum. Restart ``i``
    starts from a point seeded by ``(seed, i)`` alone, hence adding restarts
    never lowers the estimate.
    """
    Z = np.asarray(Z, dtype=float)
    n = int(round(Z.size ** (1.0 / p)))
    if n**p != Z.size:
        raise ValueError("Z size is not a perfect p-th power")
    Zs = symmetrize(Z.ravel(), n, p)
    X = np.stack([uniform_sphere(make_rng(seed, STREAM_TENSOR, 1, i), 1, n)[0] for i in range(n_restarts)])
    best = contract(Zs, n, p, X)
    best_x = X.copy()
    conv = np.zeros(n_restarts, dtype=bool)
    active = np.arange(n_restarts)
    for _ in range(max_iter):
        if active.size == 0:
            break
        x = X[active]
        A = Zs.reshape(-1, n) @ x.T
        for _k in range(p - 2):
            A = np.einsum("anr,rn->ar", A.reshape(-1, n, A.shape[-1]), x)
        g = A.T  # (R, n): Zsym(., x, ..., x) up to the factor p
        nrm = np.linalg.norm(g, axis=1, keepdims=True)
        nrm[nrm == 0] = 1.0
        xn = g / nrm
        val = contract(Zs, n, p, xn)
        better = val > best[active]
        best[active[better]] = val[better]
        best_x[active[better]] = xn[better]
        moved = np.linalg.norm(xn - x, axis=1)
        X[active] = xn
        done = moved < tol
        conv[active[done]] = True
        active = active[~done]
    k = int(np.argmax(best))
    return InjectiveNormEstimate(
        value=float(best[k]), normalized=float(best[k]) / math.sqrt(n), best_x=best_x[k],
        per_restart=best, n_converged=int(conv.sum()), n_restarts=n_restarts,
    )


# ---------------------------------------------------------------- latitude bands


@dataclass(frozen=True)
class Bands:
    """Latitude thresholds ``0 <= s < t <= 1`` and the tensor order (for parity)."""

    s: float
    t: float
    p: int = 3

    def __post_init__(self):
        if not 0 <= self.s < self.t <= 1:
            raise ValueError(f"need 0 <= s < t <= 1, got s={self.s}, t={self.t}")

    @property
    def even(self) -> bool:
        return self.p % 2 == 0

    def coordinate(self, q):
        q = np.asarray(q, dtype=float)
        return np.abs(q) if self.even else q

    def label(self, q) -> np.ndarray:
        """0 for S_s, 1 for W_{s,t}, 2 for T_t."""
        c = self.coordinate(q)
        return np.where(c <= self.s, 0, np.where(c <= self.t, 1, 2))

    def in_S(self, q):
        return self.coordinate(q) <= self.s

    def in_T(self, q):
        return self.coordinate(q) > self.t

    def prior_masses(self, n: int) -> tuple:
        return band_masses(n, self.s, self.t, self.p)


class LatitudeProposal:
    """Proposal for the latitude ``q = <theta, theta0>``.

    A mixture ``alpha * prior + (1 - alpha) * g`` where ``g`` is a
    piecewise-constant density proportional to
    ``exp(n lam^2 q^p / 2) (1 - q^2)^{(n-3)/2}``, the latitude law of the
    noise-averaged posterior. With ``alpha = 1`` this is the uniform-sphere
    proposal.
    """

    def __init__(self, n: int, p: int, lam: float, alpha: float = 0.3, cells: int = 4000):
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        self.n, self.p, self.lam, self.alpha = n, p, lam, alpha
        self.edges = np.linspace(-1.0, 1.0, cells + 1)
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        self.width = self.edges[1] - self.edges[0]
        lg = 0.5 * n * lam * lam * mid**p + latitude_log_density(mid, n)
        lg -= lg.max()
        cm = np.exp(lg)
        self.cell_p = cm / cm.sum()
        with np.errstate(divide="ignore"):
            self._log_cell_dens = np.log(self.cell_p) - math.log(self.width)

    def log_prior(self, q):
        return latitude_log_density(q, self.n)

    def log_density(self, q):
        q = np.asarray(q, dtype=float)
        lp = self.log_prior(q)
        if self.alpha == 1:
            return lp
        k = np.clip(np.searchsorted(self.edges, q, side="right") - 1, 0, len(self.cell_p) - 1)
        lg = self._log_cell_dens[k]
        return np.logaddexp(math.log(self.alpha) + lp, math.log1p(-self.alpha) + lg)

    def sample(self, rng, count: int) -> np.ndarray:
        a = (self.n - 1) / 2.0
        q = 2.0 * rng.beta(a, a, size=count) - 1.0
        if self.alpha < 1:
            use_g = rng.random(count) >= self.alpha
            m = int(use_g.sum())
            k = rng.choice(len(self.cell_p), size=m, p=self.cell_p)
            q[use_g] = self.edges[k] + self.width * rng.random(m)
        return np.clip(q, -1.0 + 1e-15, 1.0 - 1e-15)


def sphere_points_at_latitude(rng, theta0: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Points ``q theta0 + sqrt(1 - q^2) u`` with u uniform on the sphere orthogonal to theta0."""
    n = len(theta0)
    u = rng.standard_normal((len(q), n))
    u -= np.outer(u @ theta0, theta0)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = q[:, None] * theta0 + np.sqrt(1.0 - q * q)[:, None] * u
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


@dataclass
class BandMassReport:
    S: float
    W: float
    T: float
    se_S: float
    se_W: float
    se_T: float
    ratio_S_T: float
    ess: float
    n_mc: int
    ess_ok: bool
    draws: np.ndarray = field(default=None, repr=False)
    log_weights: np.ndarray = field(default=None, repr=False)
    q: np.ndarray = field(default=None, repr=False)

    @property
    def masses(self) -> tuple:
        return (self.S, self.W, self.T)


def posterior_band_masses(
    inst: TensorInstance,
    bands: Bands,
    n_mc: int = 100_000,
    seed: int = 0,
    proposal: str = "mixture",
    alpha: float = 0.3,
    min_ess: float = 100.0,
    keep_draws: bool = False,
) -> BandMassReport:
    """Self-normalised importance sampling of ``Pi(S), Pi(W), Pi(T)`` given Y.

    ``proposal="uniform"`` draws theta uniformly on the sphere and weights by
    ``exp(l(theta))``. The default ``"mixture"`` draws the latitude from
    :class:`LatitudeProposal` and the orthogonal direction uniformly, with
    weights ``exp(l(theta)) f_prior(q) / f_prop(q)``; this keeps the
    effective sample size usable when the posterior sits near theta0.
    The three masses sum to one exactly.
    """
    if bands.p != inst.p:
        bands = Bands(bands.s, bands.t, inst.p)
    rng = make_rng(seed, STREAM_IS, 1)
    if proposal == "uniform":
        prop = LatitudeProposal(inst.n, inst.p, inst.lam, alpha=1.0)
    elif proposal == "mixture":
        prop = LatitudeProposal(inst.n, inst.p, inst.lam, alpha=alpha)
    else:
        raise ValueError(f"unknown proposal {proposal!r}")
    q = prop.sample(rng, n_mc)
    pts = sphere_points_at_latitude(rng, inst.theta0, q)
    q = pts @ inst.theta0
    logw = tensor_loglik(inst, pts) + prop.log_prior(q) - prop.log_density(q)
    logw -= logw.max()
    wts = np.exp(logw)
    tot = wts.sum()
    lab = bands.label(q)
    mS = float(wts[lab == 0].sum() / tot)
    mW = float(wts[lab == 1].sum() / tot)
    mT = 1.0 - (mS + mW)

    def se(mask, m):
        return float(math.sqrt(np.sum(wts**2 * (mask - m) ** 2)) / tot)

    ess = float(tot**2 / np.sum(wts**2))
    return BandMassReport(
        S=mS, W=mW, T=mT,
        se_S=se(lab == 0, mS), se_W=se(lab == 1, mW), se_T=se(lab == 2, mT),
        ratio_S_T=mS / mT if mT > 0 else math.inf,
        ess=ess, n_mc=n_mc, ess_ok=ess > min_ess,
        draws=pts if keep_draws else None,
        log_weights=logw if keep_draws else None,
        q=q if keep_draws else None,
    )


@dataclass
class ContractionCurve:
    lams: np.ndarray
    mean_T: np.ndarray
    stderr_T: np.ndarray
    per_seed: np.ndarray
    prior_T: float
    min_ess: float


def contraction_curve(n: int, p: int, lams, s: float, n_mc: int = 20_000, seeds=range(10), proposal: str = "mixture") -> ContractionCurve:
    """Average ``Pi(T_s | Y)`` over independent tensors for each lambda."""
    lams = np.asarray(list(lams), dtype=float)
    seeds = list(seeds)
    bands = Bands(0.0, s, p) if s > 0 else Bands(0.0, 1.0, p)
    per = np.empty((len(lams), len(seeds)))
    min_ess = math.inf
    for i, lam in enumerate(lams):
        for j, sd in enumerate(seeds):
            inst = simulate_tensor(n, p, lam, seed=sd)
            rep = posterior_band_masses(inst, bands, n_mc, seed=derive_seed(sd, i), proposal=proposal)
            per[i, j] = rep.T
            min_ess = min(min_ess, rep.ess)
    return ContractionCurve(
        lams=lams,
        mean_T=per.mean(axis=1),
        stderr_T=per.std(axis=1, ddof=1) / math.sqrt(len(seeds)) if len(seeds) > 1 else np.zeros(len(lams)),
        per_seed=per,
        prior_T=bands.prior_masses(n)[2],
        min_ess=min_ess,
    )


# ---------------------------------------------------------------- scale helpers


def start_radius(n: int, eps: float) -> float:
    """``n^{-1/2 + eps}``: latitude width of the starting band around the equator."""
    return float(n) ** (-0.5 + eps)


def local_step_scale(n: int, lam: float, p: int, const: float = 1.0) -> float:
    """``const (n lam^2)^{-1/p}``, the largest step for which the latitude moves locally."""
    if lam <= 0:
        return math.inf
    return const * (n * lam * lam) ** (-1.0 / p)


def sphere_step_for(n: int, lam: float, p: int, const: float = 1.0) -> float:
    """Per-coordinate proposal scale ``delta / sqrt(n)`` with ``delta = local_step_scale``.

    ``normalize(x + h zeta)`` moves x by about ``h sqrt(n)``, so this keeps
    each step of size roughly delta.
    """
    return local_step_scale(n, lam, p, const) / math.sqrt(n)


# ---------------------------------------------------------------- serialization

_HEADER = struct.Struct("<QQdQ")


def write_tensor(inst: TensorInstance, path):
    """Little-endian binary: header (n, p: u64; lambda: f64; seed: u64), theta0, Y."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(inst.n, inst.p, inst.lam, inst.seed & ((1 << 64) - 1)))
        fh.write(np.ascontiguousarray(inst.theta0, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(inst.Y, dtype="<f8").tobytes())


def read_tensor(path) -> TensorInstance:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated tensor file")
    n, p, lam, seed = _HEADER.unpack_from(raw, 0)
    check_memory(n, p)
    need = _HEADER.size + 8 * (n + n**p)
    if len(raw) != need:
        raise ValueError(f"tensor file has {len(raw)} bytes, expected {need}")
    off = _HEADER.size
    theta0 = np.frombuffer(raw, dtype="<f8", count=n, offset=off).astype(float)
    Y = np.frombuffer(raw, dtype="<f8", count=n**p, offset=off + 8 * n).astype(float)
    return TensorInstance(n=int(n), p=int(p), lam=float(lam), Y=Y, theta0=theta0, seed=int(seed))
