"""Ball, annulus and band masses, small-ball bounds and radial free-entropy profiles.

Everything that turns the radial structure of the regression posterior into
one-dimensional integrals lives here. Annuli are the open shells
``{theta : |theta| in (r, r + eps)}``; balls are ``{|theta| <= r}``.

For the isotropic prior all ball and annulus masses are exact (chi-square
radial law, evaluated in log space). For the alpha-regular prior masses are
Monte Carlo frequencies, and exponentially small ball masses are accessed
through a Chernoff bound and an exponentially tilted importance sampler.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import brentq

from .priors import ISOTROPIC, PriorSpec, radial_samples
from .radial_model import SufficientStats, WParams, eval_w, w_range
from .rng import STREAM_IS, make_rng
from .special import (
    log_diff_exp,
    log_reg_inc_beta,
    log_reg_inc_gamma_lower,
    log_reg_inc_gamma_upper,
    reg_inc_beta,
    reg_inc_gamma_lower,
)

__all__ = [
    "reg_inc_beta",
    "reg_inc_gamma_lower",
    "BallProb",
    "isotropic_ball_prob",
    "isotropic_annulus_log_mass",
    "isotropic_smallball_lower_bound",
    "chernoff_ball_log_upper",
    "tilted_ball_estimate",
    "smallball_scaling_fit",
    "band_prior_mass",
    "log_band_prior_mass",
    "band_mass_log_asymptotic",
    "RadialGrid",
    "radial_grid_build",
    "grid_edges",
    "FreeEntropyProfile",
    "free_entropy_profile",
    "posterior_annulus_ratio",
    "posterior_region_log_mass",
    "prior_ratio_condition_check",
    "solve_s0",
    "solve_nu",
]


# ---------------------------------------------------------------- balls


@dataclass(frozen=True)
class BallProb:
    prob: float
    log: float


def _iso_scale(D: int, rescale: float) -> float:
    return D / (2.0 * rescale)


def isotropic_ball_prob(D: int, z: float, rescale: float = 1.0) -> BallProb:
    """``Pi(|theta| <= z)`` for ``theta ~ N(0, rescale I_D / D)``.

    ``D |theta|^2 / rescale`` is chi-square with D degrees of freedom, so the
    mass is ``P(D/2, D z^2 / (2 rescale))``.
    """
    if z < 0:
        raise ValueError("z must be non-negative")
    if D < 1:
        raise ValueError("D must be positive")
    x = _iso_scale(D, rescale) * z * z
    lp = log_reg_inc_gamma_lower(D / 2.0, x)
    return BallProb(prob=math.exp(lp), log=lp)


def isotropic_tail_log(D: int, z: float, rescale: float = 1.0) -> float:
    """``log Pi(|theta| > z)``."""
    return log_reg_inc_gamma_upper(D / 2.0, _iso_scale(D, rescale) * z * z)


def isotropic_annulus_log_mass(D: int, a: float, b: float, rescale: float = 1.0) -> float:
    """``log Pi(a < |theta| < b)``, accurate in both tails; ``b`` may be inf."""
    if not 0 <= a <= b:
        raise ValueError(f"need 0 <= a <= b, got a={a}, b={b}")
    if a == b:
        return -math.inf
    k = _iso_scale(D, rescale)
    h = D / 2.0
    xa, xb = k * a * a, k * b * b
    if xa >= h:
        # upper tail: Q(a) - Q(b)
        qb = -math.inf if math.isinf(b) else log_reg_inc_gamma_upper(h, xb)
        return log_diff_exp(log_reg_inc_gamma_upper(h, xa), qb)
    if math.isinf(b):
        return log_reg_inc_gamma_upper(h, xa)
    pa = -math.inf if a == 0 else log_reg_inc_gamma_lower(h, xa)
    if xb <= h:
        return log_diff_exp(log_reg_inc_gamma_lower(h, xb), pa)
    # straddles the bulk: 1 - P(a) - Q(b)
    lq = log_reg_inc_gamma_upper(h, xb)
    rest = math.exp(pa) + math.exp(lq)
    return math.log1p(-rest)


def smallball_f(x: float) -> float:
    """``f(x) = -x^2/2 + log x + 1/2``; negative on (0, 1), zero at 1."""
    return -0.5 * x * x + math.log(x) + 0.5


def smallball_D0_ok(D: int, a: float) -> bool:
    """Dimension condition ``f(1 - a) <= -2 log D / (D - 2)``."""
    if D <= 2:
        return False
    return smallball_f(1.0 - a) <= -2.0 * math.log(D) / (D - 2)


def isotropic_smallball_lower_bound(D: int, z: float, a: float) -> float:
    """Lower bound on ``-(1/D) log Pi(|theta| <= z)`` for the isotropic prior.

    Returns ``-f(z)/2 = (z^2/2 - log z - 1/2) / 2``. Valid for ``z in (0, 1 - a)``
    once D clears the dimension condition of :func:`smallball_D0_ok`; both
    are enforced.
    """
    if not 0 < a < 1:
        raise ValueError(f"a must lie in (0, 1), got {a}")
    if not 0 < z < 1 - a:
        raise ValueError(f"z must lie in (0, 1 - a) = (0, {1 - a}), got {z}")
    if not smallball_D0_ok(D, a):
        raise ValueError(f"D={D} is below the dimension threshold for a={a}")
    return -0.5 * smallball_f(z)


# ---------------------------------------------------------------- chernoff / tilting


@dataclass(frozen=True)
class ChernoffBound:
    log_bound: float
    s_star: float


def _chernoff_parts(lam: np.ndarray, z: float):
    z2 = z * z

    def h(s):
        return s * z2 - 0.5 * float(np.sum(np.log1p(2.0 * s * lam)))

    def dh(s):
        return z2 - float(np.sum(lam / (1.0 + 2.0 * s * lam)))

    return h, dh


def chernoff_ball_log_upper(spec: PriorSpec, z: float) -> ChernoffBound:
    """``min_{s >= 0} s z^2 - 1/2 sum_i log(1 + 2 s lambda_i)``, an upper bound on ``log Pi(|theta| <= z)``.

    The objective is convex in s; its stationary point solves
    ``z^2 = sum_i lambda_i / (1 + 2 s lambda_i)`` and is bracketed by
    ``(0, D / (2 z^2)]``.
    """
    if z < 0:
        raise ValueError("z must be non-negative")
    lam = spec.variances
    if z == 0:
        return ChernoffBound(-math.inf, math.inf)
    h, dh = _chernoff_parts(lam, z)
    if dh(0.0) >= 0:
        return ChernoffBound(0.0, 0.0)
    hi = spec.D / (2.0 * z * z)
    s = brentq(dh, 0.0, hi, xtol=1e-300, rtol=1e-14, maxiter=500)
    return ChernoffBound(h(s), s)


@dataclass(frozen=True)
class TiltedEstimate:
    log_p: float
    stderr: float
    n_hits: int
    n_mc: int
    s_star: float
    chernoff: float
    failed: bool = False


def tilted_ball_estimate(spec: PriorSpec, z: float, n_mc: int = 100_000, seed: int = 0, batch: int = 20_000) -> TiltedEstimate:
    """Importance-sampling estimate of ``log Pi(|theta| <= z)``.

    Draws from ``N(0, diag(lambda_i / (1 + 2 s lambda_i)))`` at the Chernoff
    optimiser ``s``; the likelihood ratio is ``exp(s |theta|^2 - c)`` with
    ``c = 1/2 sum log(1 + 2 s lambda_i)``, never larger than the Chernoff bound
    on the ball. The stderr is on the log scale (delta method).
    """
    if n_mc < 2:
        raise ValueError("n_mc must be at least 2")
    cb = chernoff_ball_log_upper(spec, z)
    lam = spec.variances
    s = cb.s_star
    sd = np.sqrt(lam / (1.0 + 2.0 * s * lam))
    rng = make_rng(seed, STREAM_IS)
    z2 = z * z
    # weights relative to the bound exp(s z^2 - c): w_rel = exp(s (|theta|^2 - z^2)) in (0, 1]
    sum_w = 0.0
    sum_w2 = 0.0
    hits = 0
    for lo in range(0, n_mc, batch):
        m = min(batch, n_mc - lo)
        th = rng.standard_normal((m, spec.D)) * sd
        r2 = np.einsum("ij,ij->i", th, th)
        inside = r2 <= z2
        wr = np.exp(s * (r2[inside] - z2))
        hits += int(inside.sum())
        sum_w += float(wr.sum())
        sum_w2 += float((wr * wr).sum())
    if hits == 0:
        return TiltedEstimate(cb.log_bound, math.inf, 0, n_mc, s, cb.log_bound, failed=True)
    mean = sum_w / n_mc
    var = max(sum_w2 / n_mc - mean * mean, 0.0)
    se_log = math.sqrt(var / n_mc) / mean
    log_p = math.log(mean) + cb.log_bound
    return TiltedEstimate(min(log_p, 0.0), se_log, hits, n_mc, s, cb.log_bound)


@dataclass
class ScalingFit:
    tau_hat: float
    slope: float
    intercept: float
    slope_stderr: float
    points: list = field(default_factory=list)


def smallball_scaling_fit(
    spec: PriorSpec, z_grid, N_grid, kappa: float = 1.0, n_mc: int = 100_000, seed: int = 0
) -> ScalingFit:
    """Fit the exponent tau in ``-(1/N) log Pi(|theta| <= z N^-b) ~ z^-tau``.

    ``spec`` supplies alpha, d and rescale; for each N the prior is rebuilt
    with ``D = round(kappa N)``. A least-squares line is fitted to
    ``log(-(1/N) log Pi)`` against ``log z`` over all (N, z) points with a
    successful tilted estimate; ``tau_hat = -slope``.
    """
    if spec.variant == ISOTROPIC:
        raise ValueError("scaling fit needs an alpha-regular prior (b > 0)")
    pts = []
    for j, N in enumerate(N_grid):
        D = max(1, int(round(kappa * N)))
        sp = PriorSpec.alpha_regular(D, spec.alpha, spec.d, spec.rescale)
        scale = float(N) ** (-sp.b)
        for k, z in enumerate(z_grid):
            est = tilted_ball_estimate(sp, z * scale, n_mc=n_mc, seed=seed + 1000 * j + k)
            y = -est.log_p / N
            pts.append(dict(N=int(N), D=D, z=float(z), log_p=est.log_p, stderr=est.stderr,
                            chernoff=est.chernoff, failed=est.failed, y=y))
    good = [p for p in pts if not p["failed"] and p["y"] > 0 and math.isfinite(p["y"])]
    if len({p["z"] for p in good}) < 2:
        raise ValueError("not enough valid small-ball estimates to fit an exponent")
    x = np.log([p["z"] for p in good])
    y = np.log([p["y"] for p in good])
    A = np.column_stack([x, np.ones_like(x)])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    n = len(x)
    if n > 2:
        sigma2 = float(np.sum((y - A @ coef) ** 2)) / (n - 2)
        cov = sigma2 * np.linalg.inv(A.T @ A)
        se = math.sqrt(cov[0, 0])
    else:
        se = math.nan
    return ScalingFit(tau_hat=-float(coef[0]), slope=float(coef[0]), intercept=float(coef[1]), slope_stderr=se, points=pts)


# ---------------------------------------------------------------- latitude bands


def _check_band_t(t: float):
    if not 0 <= t < 1:
        raise ValueError(f"t must lie in [0, 1), got {t}")


def log_band_prior_mass(n: int, t: float, p: int = 3) -> float:
    """``log Pi(T_t)`` under the uniform measure on the sphere S^{n-1}.

    ``T_t`` is ``{<theta, theta0> > t}`` for odd p and ``{|<theta, theta0>| > t}``
    for even p.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    _check_band_t(t)
    a = (n - 1) / 2.0
    cp = 1.0 if p % 2 else 2.0
    return math.log(cp) + log_reg_inc_beta((1.0 - t) / 2.0, a, a)


def band_prior_mass(n: int, t: float, p: int = 3) -> float:
    """``c_p I_{(1-t)/2}((n-1)/2, (n-1)/2)`` with ``c_p = 1`` (odd p) or 2 (even p)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    _check_band_t(t)
    a = (n - 1) / 2.0
    cp = 1.0 if p % 2 else 2.0
    return cp * reg_inc_beta((1.0 - t) / 2.0, a, a)


def band_masses(n: int, s: float, t: float, p: int = 3) -> tuple:
    """Prior masses of ``(S_s, W_{s,t}, T_t)``."""
    if not 0 <= s < t <= 1:
        raise ValueError(f"need 0 <= s < t <= 1, got s={s}, t={t}")
    ts = band_prior_mass(n, s, p)
    tt = band_prior_mass(n, t, p) if t < 1 else 0.0
    return 1.0 - ts, ts - tt, tt


def band_mass_log_asymptotic(t: float) -> float:
    """``1/2 log(1 - t^2)``, the exponential rate of the band mass as n grows."""
    _check_band_t(t)
    return 0.5 * math.log1p(-t * t)


def latitude_log_density(q, n: int) -> np.ndarray:
    """Log-density of ``<theta, theta0>`` under the uniform sphere measure."""
    q = np.asarray(q, dtype=float)
    a = (n - 1) / 2.0
    lognorm = math.lgamma(n / 2.0) - 0.5 * math.log(math.pi) - math.lgamma(a)
    with np.errstate(divide="ignore"):
        return lognorm + (a - 1.0) * np.log1p(-q * q)


# ---------------------------------------------------------------- radial grid


def grid_edges(r_max: float, eps: float, tail: bool = True, fine_to: float = 0.0, fine_eps: float = 0.0) -> np.ndarray:
    """Cell edges ``0, eps, 2 eps, ..., r_max`` (plus ``inf`` if ``tail``).

    ``fine_to``/``fine_eps`` replace the cells below ``fine_to`` with a
    finer uniform partition, used where the ramp is steep.
    """
    if not (r_max > 0 and eps > 0):
        raise ValueError("r_max and eps must be positive")
    coarse = np.arange(0.0, r_max + 0.5 * eps, eps)
    coarse[-1] = r_max
    if fine_to > 0:
        if not 0 < fine_eps < fine_to:
            raise ValueError("need 0 < fine_eps < fine_to")
        fine = np.arange(0.0, fine_to, fine_eps)
        coarse = np.union1d(fine, coarse[coarse >= fine_to])
        coarse = np.union1d(coarse, [fine_to])
    if tail:
        coarse = np.append(coarse, math.inf)
    return coarse


@dataclass
class RadialGrid:
    """Radial cells ``(edges[j], edges[j+1])`` with prior masses and likelihood values.

    ``ell_mid`` is the radial log-likelihood at the cell midpoint;
    ``ell_lo``/``ell_hi`` bracket it over the whole cell.
    """

    edges: np.ndarray
    log_mass: np.ndarray
    mass_stderr: np.ndarray
    ell_mid: np.ndarray
    ell_lo: np.ndarray
    ell_hi: np.ndarray
    exact: bool
    N: int
    empty: np.ndarray

    @property
    def n_cells(self) -> int:
        return len(self.log_mass)

    @property
    def mids(self) -> np.ndarray:
        lo, hi = self.edges[:-1], self.edges[1:]
        return np.where(np.isfinite(hi), 0.5 * (lo + hi), lo)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def cells_in(self, lo: float, hi: float, tol: float = 1e-12) -> np.ndarray:
        """Indices of the cells making up the interval ``(lo, hi)``; must align with edges."""
        e = self.edges
        i0 = int(np.argmin(np.abs(e - lo)))
        i1 = len(e) - 1 if math.isinf(hi) else int(np.argmin(np.abs(np.where(np.isfinite(e), e, 1e300) - hi)))
        if abs(e[i0] - lo) > tol * max(1.0, abs(lo)) or (math.isfinite(hi) and abs(e[i1] - hi) > tol * max(1.0, hi)):
            raise ValueError(f"interval ({lo}, {hi}) does not align with grid edges")
        if i1 <= i0:
            raise ValueError(f"interval ({lo}, {hi}) contains no cells")
        return np.arange(i0, i1)


def radial_grid_build(
    prior: PriorSpec,
    stats: SufficientStats,
    w: WParams,
    edges,
    n_mc: int = 200_000,
    seed: int = 0,
    exact: bool = None,
) -> RadialGrid:
    """Prior mass and radial log-likelihood on each cell of ``edges``.

    Isotropic priors get exact masses (differences of regularised incomplete
    gamma functions); alpha-regular priors get Monte Carlo frequencies from
    ``n_mc`` prior radii. Cells with zero estimated mass are flagged in
    ``empty`` and carry ``log_mass = -inf``.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0) or edges[0] < 0:
        raise ValueError("edges must be a strictly increasing sequence starting at r >= 0")
    if exact is None:
        exact = prior.variant == ISOTROPIC
    if exact and prior.variant != ISOTROPIC:
        raise ValueError("exact masses are only available for the isotropic prior")
    J = len(edges) - 1
    log_mass = np.empty(J)
    se = np.zeros(J)
    if exact:
        for j in range(J):
            log_mass[j] = isotropic_annulus_log_mass(prior.D, edges[j], edges[j + 1], prior.rescale)
    else:
        rs = radial_samples(prior, n_mc, seed)
        counts = np.diff(np.searchsorted(rs.radii, edges, side="right")).astype(float)
        p = counts / n_mc
        with np.errstate(divide="ignore"):
            log_mass = np.log(p)
        se = np.sqrt(p * (1 - p) / n_mc)
    mids = np.where(np.isfinite(edges[1:]), 0.5 * (edges[:-1] + edges[1:]), edges[:-1])
    ell_mid = np.asarray(stats.profile(eval_w(mids, w)), dtype=float)
    ell_lo = np.empty(J)
    ell_hi = np.empty(J)
    for j in range(J):
        wl, wh = w_range(edges[j], edges[j + 1], w)
        ell_lo[j], ell_hi[j] = stats.profile_range(wl, wh)
    return RadialGrid(
        edges=edges,
        log_mass=log_mass,
        mass_stderr=se,
        ell_mid=ell_mid,
        ell_lo=ell_lo,
        ell_hi=ell_hi,
        exact=bool(exact),
        N=stats.N,
        empty=~np.isfinite(log_mass),
    )


@dataclass
class FreeEntropyProfile:
    r: np.ndarray
    eps: np.ndarray
    F: np.ndarray
    energy: np.ndarray
    entropy: np.ndarray
    stderr: np.ndarray
    F_lo: np.ndarray
    F_hi: np.ndarray

    def local_maxima(self) -> np.ndarray:
        return _interior_extrema(self.F, np.greater)

    def local_minima(self) -> np.ndarray:
        return _interior_extrema(self.F, np.less)

    def rows(self):
        for k in range(len(self.r)):
            yield (self.r[k], self.eps[k], self.F[k], self.energy[k], self.entropy[k], self.stderr[k])


def _interior_extrema(F: np.ndarray, cmp) -> np.ndarray:
    """Indices of strict interior local extrema of a sequence, allowing flat runs.

    Points next to a non-finite value or at either end are not reported.
    """
    idx = []
    n = len(F)
    k = 1
    while k < n - 1:
        j = k
        while j + 1 < n - 1 and F[j + 1] == F[k]:
            j += 1
        if np.isfinite(F[k]) and np.isfinite(F[k - 1]) and np.isfinite(F[j + 1]):
            if cmp(F[k], F[k - 1]) and cmp(F[k], F[j + 1]):
                idx.append((k + j) // 2)
        k = j + 1
    return np.array(idx, dtype=int)


def free_entropy_profile(grid: RadialGrid, N: int = None) -> FreeEntropyProfile:
    """``F_N(r, eps) = (1/N) log int_{cell} exp(l_N) dPi`` on each grid cell.

    The midpoint value ``(1/N)[l_mid + log mass]`` is split into an energy part
    ``l_mid / N`` and an entropy part ``log mass / N``. ``F_lo``/``F_hi`` use
    the exact extremes of the log-likelihood over the cell, so the true
    functional lies between them (up to the mass stderr). Empty cells give
    ``-inf``.
    """
    N = grid.N if N is None else N
    energy = grid.ell_mid / N
    entropy = grid.log_mass / N
    with np.errstate(invalid="ignore"):
        F = energy + entropy
        F_lo = (grid.ell_lo + grid.log_mass) / N
        F_hi = (grid.ell_hi + grid.log_mass) / N
        mass = np.exp(grid.log_mass)
        stderr = np.where(grid.empty, math.inf, np.divide(grid.mass_stderr, np.where(mass > 0, mass, 1.0)) / N)
    F = np.where(grid.empty, -math.inf, F)
    return FreeEntropyProfile(
        r=grid.edges[:-1].copy(), eps=grid.widths, F=F, energy=energy, entropy=entropy,
        stderr=stderr, F_lo=F_lo, F_hi=F_hi,
    )


def _logsumexp(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    m = np.max(a) if a.size else -math.inf
    if not math.isfinite(m):
        return m
    return float(m + math.log(np.sum(np.exp(a - m))))


def _as_cells(grid: RadialGrid, region) -> np.ndarray:
    if isinstance(region, (int, np.integer)):
        if not 0 <= region < grid.n_cells:
            raise IndexError(f"cell {region} out of range")
        return np.array([int(region)])
    lo, hi = region
    return grid.cells_in(lo, hi)


@dataclass(frozen=True)
class RegionLogMass:
    mid: float
    lo: float
    hi: float


def posterior_region_log_mass(grid: RadialGrid, region) -> RegionLogMass:
    """Log posterior mass of a union of cells, normalised over the whole grid.

    The grid must cover ``[0, inf)`` for the normalisation to be the
    posterior one. ``lo``/``hi`` combine the within-cell likelihood extremes
    so that they are rigorous brackets for exact masses.
    """
    cells = _as_cells(grid, region)
    others = np.setdiff1d(np.arange(grid.n_cells), cells)
    lm = grid.log_mass
    a_mid = _logsumexp(grid.ell_mid[cells] + lm[cells])
    a_lo = _logsumexp(grid.ell_lo[cells] + lm[cells])
    a_hi = _logsumexp(grid.ell_hi[cells] + lm[cells])
    b_mid = _logsumexp(grid.ell_mid[others] + lm[others]) if others.size else -math.inf
    b_lo = _logsumexp(grid.ell_lo[others] + lm[others]) if others.size else -math.inf
    b_hi = _logsumexp(grid.ell_hi[others] + lm[others]) if others.size else -math.inf
    return RegionLogMass(
        mid=a_mid - np.logaddexp(a_mid, b_mid),
        lo=a_lo - np.logaddexp(a_lo, b_hi),
        hi=a_hi - np.logaddexp(a_hi, b_lo),
    )


@dataclass(frozen=True)
class AnnulusRatio:
    log_ratio: float
    lower: float
    upper: float
    stderr: float


def posterior_annulus_ratio(grid: RadialGrid, cellA, cellB) -> AnnulusRatio:
    """``log[Pi(A | Z) / Pi(B | Z)]`` for two cells or aligned intervals of the grid.

    The posterior normalising constant cancels. ``lower``/``upper`` bracket
    the value using the within-cell likelihood extremes; ``stderr`` is the
    Monte Carlo error from estimated masses (0 when exact).
    """
    ca, cb = _as_cells(grid, cellA), _as_cells(grid, cellB)
    lm = grid.log_mass
    if not np.isfinite(_logsumexp(lm[cb])):
        raise ValueError("denominator region has zero prior mass")
    if not np.isfinite(_logsumexp(lm[ca])):
        raise ValueError("numerator region has zero prior mass")
    mid = _logsumexp(grid.ell_mid[ca] + lm[ca]) - _logsumexp(grid.ell_mid[cb] + lm[cb])
    lo = _logsumexp(grid.ell_lo[ca] + lm[ca]) - _logsumexp(grid.ell_hi[cb] + lm[cb])
    hi = _logsumexp(grid.ell_hi[ca] + lm[ca]) - _logsumexp(grid.ell_lo[cb] + lm[cb])

    def rel_se(c):
        m = np.exp(lm[c])
        tot = m.sum()
        return math.sqrt(float(np.sum(grid.mass_stderr[c] ** 2))) / tot if tot > 0 else math.inf

    se = math.hypot(rel_se(ca), rel_se(cb))
    return AnnulusRatio(float(mid), float(lo), float(hi), se)


# ---------------------------------------------------------------- prior-ratio conditions


def annulus_log_mass(spec: PriorSpec, a: float, b: float, n_mc: int = 200_000, seed: int = 0, upper: bool = False) -> float:
    """``log Pi(a < |theta| < b)``: exact for isotropic, Monte Carlo otherwise.

    For alpha-regular priors with no Monte Carlo hits and ``upper=True``,
    the Chernoff bound on the enclosing ball is returned instead (an upper
    bound, which is the conservative side when the annulus is a numerator).
    """
    if spec.variant == ISOTROPIC:
        return isotropic_annulus_log_mass(spec.D, a, b, spec.rescale)
    rs = radial_samples(spec, n_mc, seed)
    k = np.searchsorted(rs.radii, b, side="left") - np.searchsorted(rs.radii, a, side="right")
    if k > 0:
        return math.log(k / n_mc)
    if upper and math.isfinite(b):
        return chernoff_ball_log_upper(spec, b).log_bound
    return -math.inf


@dataclass
class ConditionReport:
    lhs: float
    rhs: float
    margin: float
    passed: bool
    likelihood_gap: float
    tail_lhs: float = math.nan
    tail_rhs: float = math.nan
    tail_passed: bool = None
    L: float = math.nan


def prior_ratio_condition_check(
    spec: PriorSpec,
    s: float,
    eta: float,
    sigma: float,
    eps: float,
    nu: float,
    w: WParams,
    N: int = None,
    L: float = None,
    n_mc: int = 200_000,
    seed: int = 0,
) -> ConditionReport:
    """Check ``(1/N) log[Pi(shell(s, eta)) / Pi(shell(sigma, eps))] <= -2 nu - gap``.

    ``gap = (w_+(sigma, eps) - w_-(s, eta)) / 2``, which reduces to
    ``rho (sigma + eps - s) / 2`` when ``t < s`` and ``sigma + eps <= L``.
    When ``L`` is given the tail condition
    ``(1/N) log[Pi(|theta| > L) / Pi(shell(sigma, eps))] <= -2 nu`` is also
    evaluated (it requires ``L > 1 + eps``). ``N`` defaults to D.
    """
    if not (0 < s < sigma and eta > 0 and eps > 0):
        raise ValueError("need 0 < s < sigma and eta, eps > 0")
    N = spec.D if N is None else N
    num = annulus_log_mass(spec, s, s + eta, n_mc, seed, upper=True)
    den = annulus_log_mass(spec, sigma, sigma + eps, n_mc, seed)
    if not math.isfinite(den):
        raise ArithmeticError("start annulus has zero estimated prior mass")
    lhs = (num - den) / N
    w_minus = w_range(s, s + eta, w)[0]
    w_plus = w_range(sigma, sigma + eps, w)[1]
    gap = 0.5 * (w_plus - w_minus)
    rhs = -2.0 * nu - gap
    rep = ConditionReport(lhs=lhs, rhs=rhs, margin=rhs - lhs, passed=bool(lhs <= rhs), likelihood_gap=gap)
    if L is not None:
        if not L > 1 + eps:
            raise ValueError(f"tail radius L must exceed 1 + eps = {1 + eps}")
        tail = annulus_log_mass(spec, L, math.inf, n_mc, seed, upper=False)
        rep.tail_lhs = (tail - den) / N
        rep.tail_rhs = -2.0 * nu
        rep.tail_passed = bool(rep.tail_lhs <= rep.tail_rhs)
        rep.L = L
    return rep


def s0_condition(s: float, kappa: float, rho: float, sigma: float, eps: float) -> float:
    """Slack of ``-log 2s >= (2/kappa)[2 + rho (sigma + eps - s)/2] - 2 s^2 + 1/2``.

    Positive when the inequality holds.
    """
    return -math.log(2 * s) - ((2.0 / kappa) * (2.0 + 0.5 * rho * (sigma + eps - s)) - 2.0 * s * s + 0.5)


def solve_s0(kappa: float, rho: float, sigma: float = 2 / 3, eps: float = 0.7, safety: float = 0.9) -> float:
    """Largest ``s`` in (0, sigma/2) satisfying :func:`s0_condition`, times ``safety``.

    The slack tends to +inf as s -> 0, so the root is found by bisection
    from the left end.
    """
    f = lambda s: s0_condition(s, kappa, rho, sigma, eps)
    hi = min(sigma / 2.0, 0.5 - 1e-12)
    if f(hi) >= 0:
        return safety * hi
    lo = hi
    while f(lo) < 0:
        lo /= 2.0
        if lo < 1e-300:
            raise ArithmeticError("no admissible s found")
    return safety * brentq(f, lo, hi, xtol=1e-14)


def solve_nu(
    spec: PriorSpec, s: float, eta: float, sigma: float, eps: float, w: WParams, N: int = None,
    L: float = None, n_mc: int = 200_000, seed: int = 0,
) -> float:
    """Largest ``nu`` for which :func:`prior_ratio_condition_check` passes.

    With ``L`` given, the tail condition is enforced as well. The returned
    value may be non-positive, meaning no admissible ``nu`` exists.
    """
    rep = prior_ratio_condition_check(spec, s, eta, sigma, eps, 0.0, w, N, L, n_mc, seed)
    nu = 0.5 * (-rep.lhs - rep.likelihood_gap)
    if L is not None:
        nu = min(nu, -0.5 * rep.tail_lhs)
    return nu
