"""Real special functions used by the kernel formulas.

Bessel J and Gamma are backed by :mod:`scipy.special` (Cephes/AMOS); the
first-zero finder and the Laguerre recurrence are local.
"""

import functools

import numpy as np
from scipy import special
from scipy.optimize import brentq

__all__ = [
    "bessel_j",
    "bessel_j_prime",
    "bessel_first_zero",
    "gamma_fn",
    "gammaln_fn",
    "log_gamma_ratio",
    "laguerre",
    "lambda_fn",
    "ball_volume",
    "sphere_area",
]


def _check_order(nu):
    if nu < -0.5:
        raise ValueError(f"Bessel order must be >= -1/2, got {nu}")


def bessel_j(nu, x):
    """Bessel function of the first kind J_nu(x) for real nu >= -1/2, x >= 0.

    Orders 0, 1 and +-1/2 are routed to faster closed forms.
    """
    _check_order(nu)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("bessel_j requires x >= 0")
    if nu == 0:
        out = special.j0(x)
    elif nu == 1:
        out = special.j1(x)
    elif nu == 0.5 or nu == -0.5:
        with np.errstate(divide="ignore", invalid="ignore"):
            amp = np.sqrt(2.0 / (np.pi * x))
            out = amp * (np.sin(x) if nu == 0.5 else np.cos(x))
        if nu == 0.5:
            out = np.where(x == 0, 0.0, out)
        else:
            out = np.where(x == 0, np.inf, out)
    else:
        out = special.jv(nu, x)
    return out if out.ndim else float(out)


def bessel_j_prime(nu, x):
    """Derivative J_nu'(x), via (J_{nu-1} - J_{nu+1})/2, or -J_1 at nu = 0."""
    _check_order(nu)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("bessel_j_prime requires x >= 0")
    if nu == 0:
        out = -special.j1(x)
    else:
        out = 0.5 * (special.jv(nu - 1, x) - special.jv(nu + 1, x))
    return out if out.ndim else float(out)


@functools.lru_cache(maxsize=64)
def bessel_first_zero(nu):
    """First positive zero j_nu of J_nu, absolute accuracy ~1e-14.

    The classical bracket [max(nu, 1), nu + 3 pi] can hold several zeros, so
    it is scanned on a fine step for the first sign change, which is then
    refined by Brent's method.
    """
    _check_order(nu)
    # J_nu > 0 on (0, nu] for nu >= 0, and j_{-1/2} = pi/2 > 1, so start low.
    lo = max(float(nu), 0.0) + 1e-3 if nu > 0 else 1e-3
    hi = nu + 3 * np.pi + 0.5
    xs = np.arange(lo, hi, 0.05)
    vs = special.jv(nu, xs)
    idx = np.flatnonzero(np.sign(vs[:-1]) * np.sign(vs[1:]) <= 0)
    if idx.size == 0:
        raise RuntimeError(f"no sign change of J_{nu} found in [{lo}, {hi}]")
    i = idx[0]
    if vs[i] == 0.0:
        return float(xs[i])
    return float(brentq(lambda y: special.jv(nu, y), xs[i], xs[i + 1], xtol=1e-15, rtol=1e-15))


def gamma_fn(x):
    """Gamma function for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("gamma_fn requires x > 0")
    out = special.gamma(x)
    return out if out.ndim else float(out)


def gammaln_fn(x):
    """log Gamma(x) for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("gammaln_fn requires x > 0")
    out = special.gammaln(x)
    return out if out.ndim else float(out)


# Bernoulli terms B_{2k} / (2k (2k - 1)) of the Stirling series
_STIRLING = (1 / 12, -1 / 360, 1 / 1260, -1 / 1680, 1 / 1188, -691 / 360360, 1 / 156)


def _stirling_tail(z):
    zi = 1.0 / z
    z2 = zi * zi
    acc = 0.0
    for c in reversed(_STIRLING):
        acc = acc * z2 + c
    return acc * zi


def log_gamma_ratio(x, h):
    """log(Gamma(x + h) / Gamma(x)) for x > 0, x + h > 0.

    Differencing two gammaln values loses about log(x) * eps in absolute
    terms; for x >= 20 the Stirling series is differenced analytically
    instead, with the leading terms combined through log1p.
    """
    x = float(x)
    h = float(h)
    if x <= 0 or x + h <= 0:
        raise ValueError("log_gamma_ratio requires x > 0 and x + h > 0")
    if x < 20 or x + h < 20:
        return float(special.gammaln(x + h) - special.gammaln(x))
    lead = (x - 0.5) * np.log1p(h / x) + h * np.log(x + h) - h
    return float(lead + _stirling_tail(x + h) - _stirling_tail(x))


def laguerre(m, alpha, x):
    """Generalized Laguerre polynomial L_m^alpha(x) by the three-term recurrence.

    (k+1) L_{k+1} = (2k + 1 + alpha - x) L_k - (k + alpha) L_{k-1}
    """
    if int(m) != m or m < 0:
        raise ValueError("laguerre degree must be a non-negative integer")
    m = int(m)
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if m == 0:
        return prev if prev.ndim else float(prev)
    cur = 1.0 + alpha - x
    for k in range(1, m):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur if cur.ndim else float(cur)


def lambda_fn(mu, z):
    """Normalized Bessel function Gamma(mu+1) (2/z)^mu J_mu(z), equal to 1 at z = 0.

    Written as 0F1(; mu+1; -z^2/4), which has no removable singularity.  The
    scipy routine returns NaN at some points once mu exceeds ~150; those
    points are recomputed with mpmath.
    """
    z = np.asarray(z, dtype=float)
    out = np.asarray(special.hyp0f1(mu + 1.0, -0.25 * z * z), dtype=float)
    bad = ~np.isfinite(out)
    if np.any(bad):
        import mpmath

        b = mpmath.mpf(mu) + 1
        fill = [float(mpmath.hyp0f1(b, -mpmath.mpf(v) ** 2 / 4)) for v in z[bad]]
        out = out.copy()
        out[bad] = fill
    return out if out.ndim else float(out)


def ball_volume(d, r=1.0):
    """Volume of the d-ball of radius r."""
    return np.pi ** (d / 2) / special.gamma(d / 2 + 1) * r**d


def sphere_area(d):
    """Surface area 2 pi^{d/2} / Gamma(d/2) of the unit sphere in R^d."""
    return 2 * np.pi ** (d / 2) / special.gamma(d / 2)
