"""Diagonal Gaussian priors on R^D.

Two families: the isotropic prior ``N(0, I_D / D)`` whose mass concentrates
on the unit sphere, and the alpha-regular prior with coordinate variances
``i^(-2 alpha / d)``, i = 1..D, a sequence-space stand-in for a Matern-type
Gaussian process. Both accept a positive ``rescale`` on the covariance.
"""

from dataclasses import asdict, dataclass
import math

import numpy as np

from .rng import STREAM_PRIOR, derive_seed, make_rng

ISOTROPIC = "isotropic"
ALPHA_REGULAR = "alpha_regular"


@dataclass(frozen=True)
class PriorSpec:
    variant: str
    D: int
    alpha: float = 1.0
    d: int = 1
    rescale: float = 1.0

    def __post_init__(self):
        if self.variant not in (ISOTROPIC, ALPHA_REGULAR):
            raise ValueError(f"unknown prior variant {self.variant!r}")
        if self.D < 1:
            raise ValueError("D must be positive")
        if not self.rescale > 0:
            raise ValueError("rescale must be positive")
        if self.variant == ALPHA_REGULAR:
            if self.d < 1:
                raise ValueError("d must be at least 1")
            if not self.alpha > self.d / 2:
                raise ValueError(f"alpha-regular prior needs alpha > d/2, got alpha={self.alpha}, d={self.d}")

    @classmethod
    def isotropic(cls, D: int, rescale: float = 1.0) -> "PriorSpec":
        return cls(ISOTROPIC, D, rescale=rescale)

    @classmethod
    def alpha_regular(cls, D: int, alpha: float = 1.0, d: int = 1, rescale: float = 1.0) -> "PriorSpec":
        return cls(ALPHA_REGULAR, D, alpha=alpha, d=d, rescale=rescale)

    @property
    def variances(self) -> np.ndarray:
        if self.variant == ISOTROPIC:
            return np.full(self.D, self.rescale / self.D)
        i = np.arange(1, self.D + 1, dtype=float)
        return self.rescale * i ** (-2.0 * self.alpha / self.d)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variances)

    @property
    def b(self) -> float:
        """Small-ball scaling exponent ``alpha/d - 1/2`` (0 for isotropic)."""
        if self.variant == ISOTROPIC:
            return 0.0
        return self.alpha / self.d - 0.5

    @property
    def tau(self) -> float:
        """``1 / b = 2d / (2 alpha - d)``; infinite for isotropic."""
        return math.inf if self.b == 0 else 1.0 / self.b

    def to_dict(self) -> dict:
        return asdict(self)


def _check_dim(spec: PriorSpec, theta: np.ndarray):
    if theta.shape[-1] != spec.D:
        raise ValueError(f"theta has dimension {theta.shape[-1]}, prior has D={spec.D}")


def sample_prior(spec: PriorSpec, count: int, seed: int = 0, rng=None) -> np.ndarray:
    """``count`` independent prior draws as a ``(count, D)`` array."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = rng if rng is not None else make_rng(seed, STREAM_PRIOR)
    return rng.standard_normal((count, spec.D)) * spec.std


def log_density(spec: PriorSpec, theta) -> float:
    """Gaussian log-density including the normalising constant."""
    theta = np.asarray(theta, dtype=float)
    _check_dim(spec, theta)
    var = spec.variances
    logdet = float(np.sum(np.log(var)))
    quad = np.sum(theta * theta / var, axis=-1)
    out = -0.5 * quad - 0.5 * logdet - 0.5 * spec.D * math.log(2.0 * math.pi)
    return float(out) if np.ndim(out) == 0 else out


def grad_log_density(spec: PriorSpec, theta) -> np.ndarray:
    """``-Sigma^{-1} theta``."""
    theta = np.asarray(theta, dtype=float)
    _check_dim(spec, theta)
    return -theta / spec.variances


@dataclass(frozen=True)
class RadialSample:
    radii: np.ndarray
    seed: int
    stream_seed: int

    def __len__(self):
        return len(self.radii)

    def cdf(self, r) -> np.ndarray:
        """Empirical CDF at ``r``."""
        return np.searchsorted(self.radii, np.asarray(r, dtype=float), side="right") / len(self.radii)


def radial_samples(spec: PriorSpec, count: int, seed: int = 0, batch: int = 65536) -> RadialSample:
    """Sorted norms of ``count`` prior draws.

    Draws are generated in fixed-size batches so memory stays bounded for
    large ``count * D``; the derived stream seed is recorded for reuse.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    stream = derive_seed(seed, STREAM_PRIOR, 1)
    rng = np.random.Generator(np.random.PCG64(stream))
    std = spec.std
    per = max(1, min(batch, (1 << 24) // spec.D))
    out = np.empty(count)
    for lo in range(0, count, per):
        hi = min(count, lo + per)
        z = rng.standard_normal((hi - lo, spec.D)) * std
        out[lo:hi] = np.sqrt(np.einsum("ij,ij->i", z, z))
    out.sort()
    return RadialSample(radii=out, seed=seed, stream_seed=stream)


def mean_norm(spec: PriorSpec) -> float:
    """``sqrt(E |theta|^2)``, an upper bound for ``E |theta|``."""
    return float(math.sqrt(spec.variances.sum()))


def max_std(spec: PriorSpec) -> float:
    return float(spec.std.max())
