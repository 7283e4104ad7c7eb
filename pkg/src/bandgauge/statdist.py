"""Distribution functions used by the outlier test and the significance test.

Everything here is built on the regularized incomplete beta function,
evaluated by the classic continued-fraction expansion.  Quantiles are
obtained by bisection on the CDF, which is slow but monotone and therefore
reliable to the requested absolute tolerance.
"""

from __future__ import annotations

import math

_MAX_CF_ITERS = 300
_CF_EPS = 3e-15
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_CF_ITERS + 1):
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
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("beta parameters must be positive")
    if x < 0.0 or x > 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # Use the expansion on the side where it converges fast.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(x: float, dof: float) -> float:
    """CDF of Student's t with `dof` degrees of freedom."""
    if dof <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x == 0.0:
        return 0.5
    tail = 0.5 * betainc_reg(dof / 2.0, 0.5, dof / (dof + x * x))
    return 1.0 - tail if x > 0 else tail


def student_t_upper_critical(p: float, dof: float, tol: float = 1e-10) -> float:
    """Value t with P(T > t) = p, found by bisection on the CDF.

    `tol` is an absolute tolerance on t.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("tail probability must lie in (0, 1)")
    target = 1.0 - p
    lo, hi = 0.0, 2.0
    while student_t_cdf(hi, dof) < target:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("t quantile bracketing failed")
    if target < 0.5:
        lo = -hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if student_t_cdf(mid, dof) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def f_cdf(x: float, dof1: float, dof2: float) -> float:
    """CDF of the F distribution with (dof1, dof2) degrees of freedom."""
    if dof1 <= 0 or dof2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0.0:
        return 0.0
    return betainc_reg(dof1 / 2.0, dof2 / 2.0, dof1 * x / (dof1 * x + dof2))


def f_quantile(p: float, dof1: float, dof2: float, tol: float = 1e-10) -> float:
    """Value x with P(F <= x) = p, by bisection."""
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie in (0, 1)")
    lo, hi = 0.0, 2.0
    while f_cdf(hi, dof1, dof2) < p:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("F quantile bracketing failed")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if f_cdf(mid, dof1, dof2) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
