"""Regularized incomplete gamma and beta functions.

Series / continued-fraction evaluations (modified Lentz) with the
prefactors ``x^a e^-x / Gamma(a)`` and ``x^a (1-x)^b / B(a, b)`` assembled
from Stirling corrections and ``log1p`` so that large shape parameters do
not lose digits to cancellation. Log-space variants are provided because
the band and ball masses used elsewhere routinely underflow.
"""

import math

_TINY = 1e-300
_EPS = 1e-16
_MAXIT = 200_000
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _stirling_corr(x: float) -> float:
    """lgamma(x) - [(x - 1/2) log x - x + log(2 pi)/2]."""
    if x >= 10.0:
        x2 = 1.0 / (x * x)
        return (
            1.0 / 12.0
            - x2 * (1.0 / 360.0 - x2 * (1.0 / 1260.0 - x2 * (1.0 / 1680.0 - x2 / 1188.0)))
        ) / x
    return math.lgamma(x) - ((x - 0.5) * math.log(x) - x + _HALF_LOG_2PI)


def log1pmx(x: float) -> float:
    """log(1 + x) - x, accurate for small ``x``."""
    if abs(x) < 0.25:
        # sum_{k>=2} (-1)^{k+1} x^k / k
        term = x
        total = 0.0
        k = 2
        while True:
            term *= -x
            add = term / k
            total += add
            if abs(add) < 1e-18 * max(abs(total), 1e-300):
                break
            k += 1
        return total
    return math.log1p(x) - x


def _log_ratio_m1(ratio: float) -> float:
    """log(ratio) - (ratio - 1) for ratio > 0, without losing digits near 1."""
    if abs(ratio - 1.0) < 0.25:
        return log1pmx(ratio - 1.0)
    return math.log(ratio) - (ratio - 1.0)


def _log_gamma_prefactor(a: float, x: float) -> float:
    """log(x^a e^-x / Gamma(a))."""
    if a >= 10.0:
        return a * _log_ratio_m1(x / a) + 0.5 * math.log(a) - _HALF_LOG_2PI - _stirling_corr(a)
    return a * math.log(x) - x - math.lgamma(a)


def _gamma_series(a: float, x: float) -> float:
    # sum_{n>=0} x^n / (a (a+1) ... (a+n))
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAXIT):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total
    raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_cf(a: float, x: float) -> float:
    # continued fraction for Q(a, x) / prefactor, modified Lentz
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def _check_gamma_args(a: float, x: float) -> None:
    if not (a > 0.0) or not math.isfinite(a):
        raise ValueError(f"shape a must be positive and finite, got {a}")
    if not (x >= 0.0):
        raise ValueError(f"argument x must be non-negative, got {x}")


def log_reg_inc_gamma_lower(a: float, x: float) -> float:
    """log P(a, x)."""
    _check_gamma_args(a, x)
    if x == 0.0:
        return -math.inf
    if math.isinf(x):
        return 0.0
    pre = _log_gamma_prefactor(a, x)
    if x < a + 1.0:
        return pre + math.log(_gamma_series(a, x))
    q = math.exp(pre) * _gamma_cf(a, x)
    return math.log1p(-q)


def log_reg_inc_gamma_upper(a: float, x: float) -> float:
    """log Q(a, x) = log(1 - P(a, x))."""
    _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return -math.inf
    pre = _log_gamma_prefactor(a, x)
    if x < a + 1.0:
        p = math.exp(pre) * _gamma_series(a, x)
        return math.log1p(-p) if p < 1.0 else -math.inf
    return pre + math.log(_gamma_cf(a, x))


def reg_inc_gamma_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    return math.exp(log_reg_inc_gamma_lower(a, x))


def reg_inc_gamma_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    return math.exp(log_reg_inc_gamma_upper(a, x))


def _log_beta_prefactor(a: float, b: float, x: float) -> float:
    """log(x^a (1-x)^b / B(a, b))."""
    if a >= 10.0 and b >= 10.0:
        s = a + b
        la = _log_ratio_m1(x * s / a)
        lb = _log_ratio_m1((1.0 - x) * s / b)
        # a*log1p(u) + b*log1p(v) with a*u + b*v = 0 collapses to the log1pmx terms
        return (
            a * la
            + b * lb
            + 0.5 * math.log(a * b / s)
            - _HALF_LOG_2PI
            + _stirling_corr(s)
            - _stirling_corr(a)
            - _stirling_corr(b)
        )
    if b >= 10.0:
        return a * math.log(x) + b * math.log1p(-x) - math.lgamma(a) + _lgamma_shift(b, a)
    if a >= 10.0:
        return a * math.log(x) + b * math.log1p(-x) - math.lgamma(b) + _lgamma_shift(a, b)
    return (
        a * math.log(x)
        + b * math.log1p(-x)
        + math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
    )


def _lgamma_shift(big: float, small: float) -> float:
    """lgamma(big + small) - lgamma(big) without cancellation, for big >= 10."""
    s = big + small
    return (
        (big - 0.5) * math.log1p(small / big)
        + small * math.log(s)
        - small
        + _stirling_corr(s)
        - _stirling_corr(big)
    )


def _beta_cf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _check_beta_args(x: float, a: float, b: float) -> None:
    if not (a > 0.0 and b > 0.0) or not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError(f"shapes must be positive and finite, got a={a}, b={b}")
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x must lie in [0, 1], got {x}")


def _log_ibeta_direct(x: float, a: float, b: float) -> float:
    return _log_beta_prefactor(a, b, x) + math.log(_beta_cf(a, b, x)) - math.log(a)


def log_reg_inc_beta(x: float, a: float, b: float) -> float:
    """log I_x(a, b)."""
    _check_beta_args(x, a, b)
    if x == 0.0:
        return -math.inf
    if x == 1.0:
        return 0.0
    if x < (a + 1.0) / (a + b + 2.0):
        return _log_ibeta_direct(x, a, b)
    comp = math.exp(_log_ibeta_direct(1.0 - x, b, a))
    return math.log1p(-comp) if comp < 1.0 else -math.inf


def reg_inc_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta I_x(a, b) for x in [0, 1], a, b > 0."""
    _check_beta_args(x, a, b)
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(_log_ibeta_direct(x, a, b))
    return 1.0 - math.exp(_log_ibeta_direct(1.0 - x, b, a))


def log_diff_exp(la: float, lb: float) -> float:
    """log(exp(la) - exp(lb)) for la >= lb."""
    if lb == -math.inf:
        return la
    if lb > la:
        raise ValueError("log_diff_exp requires la >= lb")
    if la == lb:
        return -math.inf
    return la + math.log(-math.expm1(lb - la))
