"""Quantile functions used by the delay monitor.

Inverse error function, standard normal quantile, Student-t and chi-square
quantiles. Each inverse starts from a closed-form approximation and is
polished by safeguarded Newton iterations against a CDF built on the
stdlib ``math.erf``/``math.lgamma``, giving ~1e-12 relative accuracy over
the ranges the monitors use.
"""

from __future__ import annotations

import math

_SQRT2 = math.sqrt(2.0)
_TWO_OVER_SQRTPI = 2.0 / math.sqrt(math.pi)
_EPS = 1e-15
_TINY = 1e-300


def erfinv(y: float) -> float:
    """Inverse of ``math.erf`` on (-1, 1)."""
    if not -1.0 < y < 1.0:
        if y == 1.0:
            return math.inf
        if y == -1.0:
            return -math.inf
        raise ValueError(f"erfinv domain is (-1, 1), got {y}")
    if y == 0.0:
        return 0.0
    sign = 1.0 if y > 0 else -1.0
    a = abs(y)
    # Giles (2010) single-precision starting point
    w = -math.log((1.0 - a) * (1.0 + a))
    if w < 5.0:
        w -= 2.5
        p = 2.81022636e-08
        for c in (3.43273939e-07, -3.5233877e-06, -4.39150654e-06, 0.00021858087,
                  -0.00125372503, -0.00417768164, 0.246640727, 1.50140941):
            p = c + p * w
    else:
        w = math.sqrt(w) - 3.0
        p = -0.000200214257
        for c in (0.000100950558, 0.00134934322, -0.00367342844, 0.00573950773,
                  -0.0076224613, 0.00943887047, 1.00167406, 2.83297682):
            p = c + p * w
    x = p * a
    # Newton on erfc for the tail keeps the residual from cancelling
    q = 1.0 - a
    for _ in range(4):
        if a < 0.5:
            r = math.erf(x) - a
        else:
            r = q - math.erfc(x)
        step = r / (_TWO_OVER_SQRTPI * math.exp(-x * x))
        x -= step
        if abs(step) <= 1e-16 * max(1.0, abs(x)):
            break
    return sign * x


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def norm_sf(x: float) -> float:
    return 0.5 * math.erfc(x / _SQRT2)


def norm_ppf(q: float) -> float:
    """Standard normal quantile."""
    if not 0.0 < q < 1.0:
        if q == 0.0:
            return -math.inf
        if q == 1.0:
            return math.inf
        raise ValueError(f"probability must be in (0, 1), got {q}")
    # Phi^-1(q) = -sqrt(2) erfcinv(2q); route through the tail-stable branch
    if q < 0.5:
        return -_SQRT2 * _erfcinv(2.0 * q)
    return _SQRT2 * _erfcinv(2.0 * (1.0 - q)) if q > 0.5 else 0.0


def _erfcinv(z: float) -> float:
    # z in (0, 1]; returns x >= 0 with erfc(x) = z
    if z >= 1.0:
        return 0.0
    x = erfinv(1.0 - z) if z > 1e-8 else math.sqrt(-math.log(z))
    for _ in range(50):
        f = math.erfc(x) - z
        step = -f / (_TWO_OVER_SQRTPI * math.exp(-x * x))
        x -= step
        if abs(step) <= 1e-15 * max(1.0, x):
            break
    return x


# -- incomplete beta / gamma -------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        de = d * c
        h *= de
        if abs(de - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _betacf(b, a, 1.0 - x) / b


def gammainc(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if x <= 0.0:
        return 0.0
    if x < a + 1.0:
        term = total = 1.0 / a
        ap = a
        for _ in range(100_000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    return 1.0 - gammaincc(a, x)


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if x < a + 1.0:
        return 1.0 - gammainc(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 100_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = d if abs(d) > _TINY else _TINY
        c = b + an / c
        c = c if abs(c) > _TINY else _TINY
        d = 1.0 / d
        de = d * c
        h *= de
        if abs(de - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


# -- Student t ---------------------------------------------------------------

def t_cdf(x: float, df: float) -> float:
    tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + x * x))
    return 1.0 - tail if x > 0 else tail


def t_pdf(x: float, df: float) -> float:
    logc = (math.lgamma(0.5 * (df + 1.0)) - math.lgamma(0.5 * df)
            - 0.5 * math.log(df * math.pi))
    return math.exp(logc - 0.5 * (df + 1.0) * math.log1p(x * x / df))


def t_ppf(q: float, df: float) -> float:
    """Student-t quantile with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if not 0.0 < q < 1.0:
        raise ValueError(f"probability must be in (0, 1), got {q}")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -t_ppf(1.0 - q, df)
    if df == 1.0:
        return math.tan(math.pi * (q - 0.5))
    if df == 2.0:
        a = 4.0 * q * (1.0 - q)
        return 2.0 * (q - 0.5) * math.sqrt(2.0 / a)
    # Cornish-Fisher expansion around the normal quantile
    z = norm_ppf(q)
    z3, z5 = z ** 3, z ** 5
    x = (z + (z3 + z) / (4 * df) + (5 * z5 + 16 * z3 + 3 * z) / (96 * df ** 2)
         + (3 * z ** 7 + 19 * z5 + 17 * z3 - 15 * z) / (384 * df ** 3))
    lo, hi = 0.0, max(2.0 * x, 1.0)
    while t_cdf(hi, df) < q:
        hi *= 2.0
    return _polish(lambda v: t_cdf(v, df) - q, lambda v: t_pdf(v, df), x, lo, hi)


# -- chi-square --------------------------------------------------------------

def chi2_cdf(x: float, df: float) -> float:
    return gammainc(0.5 * df, 0.5 * x)


def chi2_pdf(x: float, df: float) -> float:
    if x <= 0:
        return 0.0
    k = 0.5 * df
    return math.exp((k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k))


def chi2_ppf(q: float, df: float) -> float:
    """Chi-square quantile with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if not 0.0 < q < 1.0:
        raise ValueError(f"probability must be in (0, 1), got {q}")
    # Wilson-Hilferty start
    z = norm_ppf(q)
    h = 2.0 / (9.0 * df)
    x = df * max(1.0 - h + z * math.sqrt(h), 1e-3) ** 3
    a = 0.5 * df
    # leading term of the lower-tail series, P(a, y) ~ y^a / Gamma(a + 1)
    series = 2.0 * math.exp((math.log(q) + math.lgamma(a + 1.0)) / a)
    if series < x:
        x = series
    hi = max(2.0 * x, df + 10.0 * math.sqrt(2.0 * df) + 10.0)
    while chi2_cdf(hi, df) < q:
        hi *= 2.0

    def f(v: float) -> float:
        # work on the smaller tail to keep the residual well conditioned
        if q > 0.5:
            return (1.0 - q) - gammaincc(0.5 * df, 0.5 * v)
        return chi2_cdf(v, df) - q

    return _polish(f, lambda v: chi2_pdf(v, df), x, 0.0, hi)


def _polish(f, fprime, x0: float, lo: float, hi: float) -> float:
    """Newton iteration kept inside a shrinking bracket [lo, hi], f increasing."""
    x = min(max(x0, lo), hi)
    for _ in range(200):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx > 0:
            hi = x
        else:
            lo = x
        d = fprime(x)
        nxt = x - fx / d if d > 0 else math.nan
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= 1e-15 * abs(x) or hi - lo <= 1e-300:
            return nxt
        x = nxt
    return x
