import math

import numpy as np
import pytest

from bandgauge.imgcore import PlanarImage


def gray_image(value, w=16, h=16):
    return PlanarImage.from_array(np.full((h, w), value, dtype=np.uint8))


def rgb_image(r, g, b, w=8, h=8):
    arr = np.zeros((h, w, 3), dtype=np.uint8)
    arr[:, :, 0] = r
    arr[:, :, 1] = g
    arr[:, :, 2] = b
    return PlanarImage.from_array(arr)


def quantized_ramp_patch(n=64, levels=4, horizontal=True):
    """Float [0,1] ramp collapsed to `levels` plateaus (banding look)."""
    ramp = np.linspace(0.0, 1.0, n)
    q = np.floor(ramp * levels * 0.999999) / (levels - 1)
    q = np.clip(q, 0.0, 1.0)
    patch = np.tile(q, (n, 1))
    return patch if horizontal else patch.T


def simpson_integral(fn, lo, hi, n=20000):
    """Composite Simpson; n is forced even."""
    if n % 2:
        n += 1
    xs = np.linspace(lo, hi, n + 1)
    ys = np.array([fn(x) for x in xs])
    h = (hi - lo) / n
    return h / 3.0 * (ys[0] + ys[-1] + 4.0 * ys[1:-1:2].sum() + 2.0 * ys[2:-1:2].sum())


def t_pdf(x, dof):
    c = math.exp(math.lgamma((dof + 1) / 2.0) - math.lgamma(dof / 2.0))
    c /= math.sqrt(dof * math.pi)
    return c * (1.0 + x * x / dof) ** (-(dof + 1) / 2.0)


def t_cdf_by_integration(x, dof, n=20000):
    """Independent t CDF: 0.5 + integral of the density from 0 to x."""
    if x == 0.0:
        return 0.5
    sign = 1.0 if x > 0 else -1.0
    return 0.5 + sign * simpson_integral(lambda u: t_pdf(u, dof), 0.0, abs(x), n)


def t_upper_quantile_by_integration(p, dof):
    """Independent upper-tail quantile via bisection on the integral CDF."""
    target = 1.0 - p
    lo, hi = 0.0, 4.0
    while t_cdf_by_integration(hi, dof) < target:
        hi *= 2.0
        if hi > 1e7:
            raise RuntimeError("bracketing failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf_by_integration(mid, dof) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def f_pdf(x, d1, d2):
    if x <= 0:
        return 0.0
    ln = (
        math.lgamma((d1 + d2) / 2.0)
        - math.lgamma(d1 / 2.0)
        - math.lgamma(d2 / 2.0)
        + (d1 / 2.0) * math.log(d1 / d2)
        + (d1 / 2.0 - 1.0) * math.log(x)
        - ((d1 + d2) / 2.0) * math.log(1.0 + d1 * x / d2)
    )
    return math.exp(ln)


def f_cdf_by_integration(x, d1, d2, n=40000):
    if x <= 0:
        return 0.0
    # Substitute x = u^2 to smooth out the density's power-law corner at 0.
    return simpson_integral(
        lambda u: 2.0 * u * f_pdf(u * u, d1, d2), 0.0, np.sqrt(x), n
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240816)
