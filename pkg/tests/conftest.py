import numpy as np
import pytest

from coldstart.priors import PriorSpec
from coldstart.radial_model import WParams, simulate_dataset
from coldstart.samplers import RadialPosterior

TINY_W = WParams(T=2.0, t=0.5, L=1.5, rho=0.5)


def tiny_model(D=2, N=20, seed=3, w=TINY_W):
    data = simulate_dataset(N, D, w=w, seed=seed)
    return RadialPosterior(data.stats(), w, PriorSpec.isotropic(D))


def grid_radial_cdf(model, half_width=3.0, n=2001):
    """Radial CDF of a 2-D posterior by brute-force quadrature on a square grid.

    Returns ``(r_sorted, cdf)`` suitable for ``np.interp``.
    """
    xs = np.linspace(-half_width, half_width, n)
    X, Y = np.meshgrid(xs, xs)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    lp = model.logpost(pts)
    p = np.exp(lp - lp.max())
    r = np.hypot(pts[:, 0], pts[:, 1])
    order = np.argsort(r)
    c = np.cumsum(p[order])
    return r[order], c / c[-1]


def ks_distance(samples, r_ref, cdf_ref):
    s = np.sort(np.asarray(samples))
    n = len(s)
    ref = np.interp(s, r_ref, cdf_ref)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - ref), np.max(ref - lo)))


@pytest.fixture(scope="session")
def tiny():
    return tiny_model()


@pytest.fixture(scope="session")
def tiny_cdf(tiny):
    return grid_radial_cdf(tiny)
