"""Radially symmetric non-linear regression model.

The forward map is ``G(theta)(x) = sqrt(w(|theta|)) * g(x)`` with a
four-piece ramp ``w`` (quadratic, steep linear, shallow linear, flat) and a
bounded design function ``g`` of unit L2 norm on ``[0, 1]^d``. Data are
``Y_i = G(theta0)(X_i) + eps_i`` with uniform design and standard normal
noise; the ground truth used throughout is ``theta0 = 0``.
"""

from dataclasses import asdict, dataclass, field
import math

import numpy as np

from .rng import STREAM_DATA, make_rng


class KinkError(ValueError):
    """Raised when a derivative is requested exactly at a kink of ``w``."""


@dataclass(frozen=True)
class WParams:
    """Ramp parameters.

    ``T`` slope of the steep segment, ``t`` knee radius, ``L`` plateau radius,
    ``rho`` shallow slope, ``b`` scaling exponent and ``N_ref`` the sample size
    at which the scalings were realised (informational when ``b == 0``).
    """

    T: float = 2.0
    t: float = 0.1
    L: float = 1.0
    rho: float = 0.1
    b: float = 0.0
    N_ref: int = 1

    def __post_init__(self):
        if not (self.T > self.rho > 0):
            raise ValueError(f"need T > rho > 0, got T={self.T}, rho={self.rho}")
        if not (0 < self.t < self.L):
            raise ValueError(f"need 0 < t < L, got t={self.t}, L={self.L}")
        if self.b < 0:
            raise ValueError(f"need b >= 0, got {self.b}")

    @classmethod
    def scaled(cls, T_b: float, t_b: float, L_b: float, rho: float, b: float, N: int):
        """Realise ``t = t_b N^-b``, ``L = L_b N^-b``, ``T = T_b N^b``."""
        f = float(N) ** b
        return cls(T=T_b * f, t=t_b / f, L=L_b / f, rho=rho, b=b, N_ref=int(N))

    @property
    def kinks(self) -> tuple:
        return (self.t / 2, self.t, self.L)

    @property
    def sup(self) -> float:
        """Supremum of w, attained for r >= L."""
        Tt = self.T * self.t
        return Tt * Tt + Tt / 2 + self.rho * (self.L - self.t)

    def to_dict(self) -> dict:
        return asdict(self)


def eval_w(r, w: WParams):
    """Evaluate the ramp at radius ``r`` (scalar or array)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or np.any(np.isnan(r_arr)):
        raise ValueError("radius must be non-negative")
    T, t, L, rho = w.T, w.t, w.L, w.rho
    Tt = T * t
    out = np.where(
        r_arr < t / 2,
        4.0 * (T * r_arr) ** 2,
        np.where(
            r_arr < t,
            Tt * Tt + T * (r_arr - t / 2),
            np.where(r_arr < L, Tt * Tt + Tt / 2 + rho * (r_arr - t), w.sup),
        ),
    )
    return float(out) if out.ndim == 0 else out


def eval_w_prime(r, w: WParams):
    """Derivative of the ramp. At the kinks the right-hand limit is returned."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("radius must be non-negative")
    T, t, L, rho = w.T, w.t, w.L, w.rho
    out = np.where(
        r_arr < t / 2,
        8.0 * T * T * r_arr,
        np.where(r_arr < t, T, np.where(r_arr < L, rho, 0.0)),
    )
    return float(out) if out.ndim == 0 else out


def w_prime_over_sqrt_w(r, w: WParams):
    """``w'(r) / sqrt(w(r))``; equals ``4T`` on the quadratic piece, 0 at r = 0."""
    r_arr = np.asarray(r, dtype=float)
    wp = np.asarray(eval_w_prime(r_arr, w))
    wv = np.asarray(eval_w(r_arr, w))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(r_arr < w.t / 2, 4.0 * w.T, wp / np.sqrt(wv))
    ratio = np.where(r_arr == 0, 0.0, ratio)
    return float(ratio) if ratio.ndim == 0 else ratio


def w_range(r_lo: float, r_hi: float, w: WParams, n_probe: int = 0) -> tuple:
    """``(inf, sup)`` of w over ``(r_lo, r_hi)``.

    w is non-decreasing so the endpoints suffice; ``n_probe`` extra interior
    points are scanned for use with non-monotone ramps.
    """
    hi = w.sup if math.isinf(r_hi) else eval_w(r_hi, w)
    lo = eval_w(r_lo, w)
    if n_probe:
        top = r_hi if math.isfinite(r_hi) else max(r_lo, w.L) + 1.0
        vals = eval_w(np.linspace(r_lo, top, n_probe + 2), w)
        lo, hi = min(lo, float(vals.min())), max(hi, float(vals.max()))
    return lo, hi


@dataclass(frozen=True)
class GSpec:
    """Design function ``g`` on ``[0, 1]^d`` with unit L2 norm.

    ``constant-one`` is ``g = 1``; ``affine`` is ``g(x) = c (1 + x_1 / 2)``
    with ``c = sqrt(12 / 19)``.
    """

    variant: str = "constant-one"

    def __post_init__(self):
        if self.variant not in ("constant-one", "affine"):
            raise ValueError(f"unknown g variant {self.variant!r}")

    @property
    def scale(self) -> float:
        return 1.0 if self.variant == "constant-one" else math.sqrt(12.0 / 19.0)

    @property
    def g_min(self) -> float:
        return self.scale

    @property
    def g_max(self) -> float:
        return self.scale * (1.0 if self.variant == "constant-one" else 1.5)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.variant == "constant-one":
            return np.ones(X.shape[0])
        return self.scale * (1.0 + X[:, 0] / 2.0)


@dataclass(frozen=True)
class RegressionDataset:
    N: int
    D: int
    X: np.ndarray
    Y: np.ndarray
    eps: np.ndarray
    seed: int
    gspec: GSpec = field(default_factory=GSpec)
    wparams: WParams = field(default_factory=WParams)

    def __post_init__(self):
        if not (len(self.X) == len(self.Y) == len(self.eps) == self.N):
            raise ValueError("X, Y and eps must all have length N")

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def stats(self) -> "SufficientStats":
        gx = self.gspec(self.X)
        return SufficientStats(
            N=self.N,
            syy=float(self.Y @ self.Y),
            syg=float(self.Y @ gx),
            sgg=float(gx @ gx),
        )


@dataclass(frozen=True)
class SufficientStats:
    """``sum Y^2``, ``sum Y g(X)`` and ``sum g(X)^2``.

    The log-likelihood only sees the data through these three numbers:
    ``l_N = -syy/2 + sqrt(w) syg - w sgg / 2``.
    """

    N: int
    syy: float
    syg: float
    sgg: float

    def profile(self, wv):
        """Radial log-likelihood as a function of w (vectorised)."""
        wv = np.asarray(wv, dtype=float)
        return -0.5 * self.syy + np.sqrt(wv) * self.syg - 0.5 * wv * self.sgg

    def profile_range(self, w_lo: float, w_hi: float) -> tuple:
        """Exact (min, max) of ``profile`` over ``w in [w_lo, w_hi]``.

        In ``u = sqrt(w)`` the profile is a concave quadratic, so the max is at
        the clipped vertex ``syg / sgg`` and the min at an endpoint.
        """
        u_lo, u_hi = math.sqrt(w_lo), math.sqrt(w_hi)
        f = lambda u: -0.5 * self.syy + u * self.syg - 0.5 * u * u * self.sgg
        if self.sgg > 0:
            vertex = min(max(self.syg / self.sgg, u_lo), u_hi)
        else:  # linear in u
            vertex = u_hi if self.syg > 0 else u_lo
        return min(f(u_lo), f(u_hi)), f(vertex)


def simulate_dataset(
    N: int,
    D: int,
    gspec: GSpec = GSpec(),
    theta0=None,
    w: WParams = WParams(),
    seed: int = 0,
    d: int = 1,
) -> RegressionDataset:
    """Draw ``(X_i, Y_i)``, i = 1..N, from the regression model at ``theta0``."""
    if N < 1 or D < 1:
        raise ValueError("N and D must be positive")
    rng = make_rng(seed, STREAM_DATA)
    X = rng.uniform(size=(N, d))
    eps = rng.standard_normal(N)
    if theta0 is None:
        Y = eps.copy()
    else:
        theta0 = np.asarray(theta0, dtype=float)
        if theta0.shape != (D,):
            raise ValueError(f"theta0 must have shape ({D},)")
        amp = math.sqrt(eval_w(float(np.linalg.norm(theta0)), w))
        Y = amp * gspec(X) + eps
    return RegressionDataset(N=N, D=D, X=X, Y=Y, eps=eps, seed=seed, gspec=gspec, wparams=w)


def _norms(theta, D: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != D:
        raise ValueError(f"theta has dimension {theta.shape[-1]}, expected {D}")
    return np.linalg.norm(theta, axis=-1)


def loglik(theta, data: RegressionDataset, w: WParams, gspec: GSpec = None):
    """Empirical log-likelihood ``-1/2 sum_i (Y_i - sqrt(w(|theta|)) g(X_i))^2``.

    Evaluated term by term from the raw data (no sufficient statistics).
    Accepts a single vector or a batch with leading axes.
    """
    gspec = gspec or data.gspec
    r = _norms(theta, data.D)
    gx = gspec(data.X)
    amp = np.sqrt(eval_w(r, w))
    resid = data.Y - np.multiply.outer(amp, gx)
    out = -0.5 * np.sum(resid * resid, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def radial_loglik(r, stats: SufficientStats, w: WParams):
    """Radial profile of the log-likelihood, ``r -> l_N(theta)`` for ``|theta| = r``."""
    return stats.profile(eval_w(r, w))


def expected_loglik(theta, N: int, w: WParams):
    """Average log-likelihood ``-N w(|theta|)/2 - N/2`` under theta0 = 0."""
    theta = np.asarray(theta, dtype=float)
    r = np.linalg.norm(theta, axis=-1)
    out = -0.5 * N * np.asarray(eval_w(r, w)) - 0.5 * N
    return float(out) if np.ndim(out) == 0 else out


def _check_kink(r: float, w: WParams, atol: float = 0.0):
    for k in w.kinks:
        if abs(r - k) <= atol:
            raise KinkError(f"gradient undefined at |theta| = {r} (kink at {k})")


def grad_loglik(theta, data: RegressionDataset, w: WParams, gspec: GSpec = None) -> np.ndarray:
    """Exact gradient of :func:`loglik`.

    ``[w'(r) / (2 sqrt(w(r)))] * (theta / r) * sum_i (Y_i - sqrt(w) g_i) g_i``.
    Zero at ``theta = 0``, where ``l_N`` has a conical point.
    """
    gspec = gspec or data.gspec
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (data.D,):
        raise ValueError(f"theta must have shape ({data.D},)")
    r = float(np.linalg.norm(theta))
    if r == 0.0:
        return np.zeros(data.D)
    _check_kink(r, w)
    gx = gspec(data.X)
    sw = math.sqrt(eval_w(r, w))
    inner = float(np.sum((data.Y - sw * gx) * gx))
    return 0.5 * w_prime_over_sqrt_w(r, w) * inner * theta / r


def grad_loglik_stats(theta, stats: SufficientStats, w: WParams) -> np.ndarray:
    """Batched gradient from sufficient statistics, right-limit at the kinks."""
    theta = np.asarray(theta, dtype=float)
    r = np.linalg.norm(theta, axis=-1)
    sw = np.sqrt(eval_w(r, w))
    coef = 0.5 * np.asarray(w_prime_over_sqrt_w(r, w)) * (stats.syg - sw * stats.sgg)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r[..., None] > 0, theta / r[..., None], 0.0)
    return coef[..., None] * unit


@dataclass
class MonotonicityReport:
    worst_slope: float
    threshold: float
    passed: bool
    n_pairs: int
    analytic_sup: float


def monotonicity_certificate(
    data: RegressionDataset, w: WParams, r0: float, n_pairs: int = 200, seed: int = 0, gspec: GSpec = None
) -> MonotonicityReport:
    """Empirical check that ``l_N`` falls at least ``N/4`` per unit of ``w`` on ``[r0, L]``.

    Pairs ``r0 <= r < s <= L`` and random directions are sampled and the
    largest difference quotient ``(l_N(theta_s) - l_N(theta_r)) / (w(s) - w(r))``
    is reported. The analytic supremum over all pairs, available because
    the quotient only depends on ``sqrt(w(r)) + sqrt(w(s))``, is reported
    alongside.
    """
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    if r0 >= w.L:
        raise ValueError("r0 must lie below the plateau radius L")
    gspec = gspec or data.gspec
    rng = make_rng(seed, STREAM_DATA, 1)
    a = rng.uniform(r0, w.L, size=(n_pairs, 2))
    r, s = a.min(axis=1), a.max(axis=1)
    # always include the pair hugging r0, where the quotient is largest when sum eps g > 0
    r[0], s[0] = r0, r0 + 1e-6 * (w.L - r0)
    wr, ws = eval_w(r, w), eval_w(s, w)
    keep = ws > wr
    D = data.D
    u = rng.standard_normal((n_pairs, D))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v = rng.standard_normal((n_pairs, D))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    lr = loglik(r[:, None] * u, data, w, gspec)
    ls = loglik(s[:, None] * v, data, w, gspec)
    slopes = (ls - lr)[keep] / (ws - wr)[keep]
    worst = float(slopes.max())
    st = _stats_with(data, gspec)
    # quotient = -sgg/2 + syg / (sqrt(w_r) + sqrt(w_s)); sup over pairs
    denom_min = 2.0 * math.sqrt(eval_w(r0, w))
    denom_max = 2.0 * math.sqrt(eval_w(w.L, w))
    analytic = -0.5 * st.sgg + (st.syg / denom_min if st.syg > 0 else st.syg / denom_max)
    thr = -data.N / 4.0
    return MonotonicityReport(
        worst_slope=worst, threshold=thr, passed=worst <= thr, n_pairs=int(keep.sum()), analytic_sup=analytic
    )


def _stats_with(data: RegressionDataset, gspec: GSpec) -> SufficientStats:
    gx = gspec(data.X)
    return SufficientStats(N=data.N, syy=float(data.Y @ data.Y), syg=float(data.Y @ gx), sgg=float(gx @ gx))


def pair_slope(data: RegressionDataset, w: WParams, r: float, s: float, u=None, v=None, gspec: GSpec = None) -> float:
    """Difference quotient ``(l_N(theta_s) - l_N(theta_r)) / (w(s) - w(r))`` for one pair r < s."""
    if not r < s:
        raise ValueError(f"need r < s, got r={r}, s={s}")
    wr, ws = eval_w(r, w), eval_w(s, w)
    if ws == wr:
        raise ValueError("w(r) == w(s): quotient undefined")
    u = np.eye(data.D)[0] if u is None else np.asarray(u, dtype=float) / np.linalg.norm(u)
    v = u if v is None else np.asarray(v, dtype=float) / np.linalg.norm(v)
    return (loglik(s * v, data, w, gspec) - loglik(r * u, data, w, gspec)) / (ws - wr)
