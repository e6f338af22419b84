"""Deterministic integration and 1-D search primitives.

All integrands are vectorized callables: they receive a float ndarray of any
shape and must return an array of the same shape.

Two routes are provided for integrals over [0, inf):

* ``tail="map"``: the substitution r = s / (1 - s) followed by adaptive
  Gauss-Kronrod on [0, 1).  Good for integrands with Gaussian or fast
  algebraic decay.
* ``tail="taper"``: the integrand is multiplied by a C-infinity flat-top
  window that equals 1 on [0, T/2] and vanishes beyond T.  The window length
  is doubled until the sequence of values settles; algebraically converging
  sequences are accelerated with the Wynn epsilon algorithm.  This handles
  slowly decaying oscillatory profiles such as jinc-like kernels, whose
  integrals are only conditionally (Abel) convergent.
"""

from dataclasses import dataclass
import warnings

import numpy as np

from .specfun import bessel_j, sphere_area

__all__ = [
    "QuadratureError",
    "TailResult",
    "gauss_kronrod",
    "integrate_radial",
    "integrate_to_infinity",
    "hankel_fourier",
    "hankel_transform_grid",
    "wynn_epsilon",
    "flat_top_taper",
    "bisect_root",
    "maximize_1d",
    "DEFAULT_REL_TOL",
]

DEFAULT_REL_TOL = 1e-9

# Gauss-Kronrod 7/15 nodes on [-1, 1] (QUADPACK qk15)
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes sit at odd positions of _XGK (indices 1, 3, 5, 7)
_GW = np.zeros(15)
_GW[[1, 3, 5]] = _WG[:3]
_GW[7] = _WG[3]
_GW[[13, 11, 9]] = _WG[:3]

_GL20_X, _GL20_W = np.polynomial.legendre.leggauss(20)


class QuadratureError(RuntimeError):
    """Raised when an integral fails to reach its tolerance.

    The partial value and the error estimate are kept as attributes.
    """

    def __init__(self, message, value=np.nan, error=np.inf):
        super().__init__(f"{message} (partial value {value!r}, error estimate {error!r})")
        self.value = value
        self.error = error


@dataclass(frozen=True)
class TailResult:
    """Outcome of an integral over [0, inf) computed by the taper sequence."""

    value: float
    error: float
    converged: bool
    diverged: bool
    method: str
    sequence: tuple = ()


def _panel_rule(f, a, b):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    x = c[:, None] + h[:, None] * _NODES[None, :]
    fx = np.asarray(f(x), dtype=float)
    k = h * (fx @ _KW)
    g = h * (fx @ _GW)
    return k, np.abs(k - g)


def gauss_kronrod(f, a, b, rel_tol=DEFAULT_REL_TOL, abs_tol=1e-14, breakpoints=None,
                  max_panels=100_000):
    """Adaptive Gauss-Kronrod (7/15) integral of ``f`` over the finite [a, b].

    Panels are refined globally: at every pass the panels carrying the largest
    error estimates are halved until the rest of the error budget is small.

    Returns
    -------
    value, error : float
    """
    if b == a:
        return 0.0, 0.0
    edges = [a, b]
    if breakpoints is not None:
        bp = np.asarray(breakpoints, dtype=float)
        edges = np.unique(np.concatenate([[a, b], bp[(bp > a) & (bp < b)]]))
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    val, err = _panel_rule(f, lo, hi)
    while True:
        total = float(np.sum(val))
        err_total = float(np.sum(err))
        tol = max(abs_tol, rel_tol * abs(total))
        if err_total <= tol:
            return total, err_total
        if lo.size >= max_panels:
            raise QuadratureError("panel limit reached", total, err_total)
        order = np.argsort(-err, kind="stable")
        remaining = err_total - np.cumsum(err[order])
        n_split = int(np.searchsorted(-remaining, -0.25 * tol)) + 1
        split = np.zeros(lo.size, dtype=bool)
        split[order[:n_split]] = True
        mid = 0.5 * (lo[split] + hi[split])
        if np.any((mid <= lo[split]) | (mid >= hi[split])):
            raise QuadratureError("panels reached floating-point resolution", total, err_total)
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        nv, ne = _panel_rule(f, new_lo, new_hi)
        keep = ~split
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        val = np.concatenate([val[keep], nv])
        err = np.concatenate([err[keep], ne])
        order = np.argsort(lo, kind="stable")
        lo, hi, val, err = lo[order], hi[order], val[order], err[order]


def flat_top_taper(s):
    """C-infinity window: 1 for s <= 1/2, 0 for s >= 1, smooth in between."""
    s = np.asarray(s, dtype=float)
    y = np.clip(2.0 * (1.0 - s), 0.0, 1.0)

    def bump(v):
        with np.errstate(divide="ignore"):
            return np.where(v > 0, np.exp(-1.0 / np.where(v > 0, v, 1.0)), 0.0)

    fy, fz = bump(y), bump(1.0 - y)
    return fy / (fy + fz)


def wynn_epsilon(seq):
    """Wynn epsilon table of ``seq``; returns the even-column estimates.

    The last entry of each even column is returned, lowest order first.
    """
    prev = np.zeros(len(seq) + 1)
    cur = np.asarray(seq, dtype=float)
    out = []
    k = 0
    while cur.size > 1:
        diff = np.diff(cur)
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = prev[1:cur.size] + 1.0 / diff
        prev, cur = cur, nxt
        k += 1
        if k % 2 == 0 and np.isfinite(cur[-1]):
            out.append(float(cur[-1]))
    return out


def integrate_to_infinity(g, scale, rel_tol=DEFAULT_REL_TOL, abs_tol=1e-13, t0=None,
                          max_doublings=12, min_terms=4):
    """Integral of ``g`` over [0, inf) by the doubling flat-top taper sequence.

    Parameters
    ----------
    g : callable
        Integrand on [0, inf), vectorized.
    scale : float
        Length over which ``g`` changes appreciably (oscillation half-period
        or decay length); it sets the panel spacing.
    t0 : float, optional
        First window length; defaults to ``40 * scale``.

    Returns
    -------
    TailResult
        ``converged`` is set when the raw sequence or its Wynn transform
        settles; ``diverged`` when successive increments stop shrinking.
    """
    scale = float(scale)
    t_len = 40.0 * scale if t0 is None else float(t0)
    step = scale

    def piece(a, b, weight, atol):
        bps = np.arange(a, b, step)
        if weight:
            fn = lambda x: g(x) * flat_top_taper(x / b)
        else:
            fn = g
        return gauss_kronrod(fn, a, b, rel_tol=0.0, abs_tol=atol, breakpoints=bps)[0]

    # the first piece sets the magnitude used as absolute tolerance later on
    head = gauss_kronrod(g, 0.0, 0.5 * t_len, rel_tol=0.1 * rel_tol, abs_tol=0.1 * abs_tol,
                         breakpoints=np.arange(0.0, 0.5 * t_len, step))[0]
    magnitude = gauss_kronrod(lambda x: np.abs(g(x)), 0.0, 0.5 * t_len, rel_tol=1e-3,
                              abs_tol=abs_tol, breakpoints=np.arange(0.0, 0.5 * t_len, step))[0]
    magnitude = max(magnitude, abs_tol)
    seq = []
    for k in range(max_doublings + 1):
        atol = 0.05 * rel_tol * magnitude
        tail = piece(0.5 * t_len, t_len, True, atol)
        seq.append(head + tail)
        n = len(seq)
        ref = magnitude
        if n >= 3:
            d1 = abs(seq[-1] - seq[-2])
            d2 = abs(seq[-2] - seq[-3])
            if d1 <= rel_tol * ref and d2 <= 10 * rel_tol * ref:
                return TailResult(seq[-1], d1, True, False, "raw", tuple(seq))
        if n >= min_terms + 1:
            # checked first: Wynn maps a geometrically growing sequence to its antilimit
            incs = np.abs(np.diff(seq[-4:]))
            if np.all(incs > 0) and np.all(incs[1:] / incs[:-1] >= 0.75) and incs[-1] > 1e-6 * ref:
                return TailResult(seq[-1], float(incs[-1]), False, True, "divergent", tuple(seq))
            est = wynn_epsilon(seq)
            est_prev = wynn_epsilon(seq[:-1])
            if est and est_prev:
                err = abs(est[-1] - est_prev[-1])
                if err <= rel_tol * ref:
                    return TailResult(est[-1], err, True, False, "wynn", tuple(seq))
        head += piece(0.5 * t_len, t_len, False, atol)
        t_len *= 2.0
    est = wynn_epsilon(seq)
    value = est[-1] if est else seq[-1]
    return TailResult(value, abs(seq[-1] - seq[-2]), False, False, "exhausted", tuple(seq))


def integrate_radial(f, d, upper=np.inf, rel_tol=DEFAULT_REL_TOL, *, abs_tol=1e-14,
                     breakpoints=None, tail="map", scale=1.0):
    """Integral of the radial function f(|x|) over the ball of radius ``upper`` in R^d.

    Equals ``sphere_area(d) * int_0^upper r^(d-1) f(r) dr``.  With
    ``upper = inf`` the ``tail`` argument selects the map or taper route.

    Raises
    ------
    QuadratureError
        If the requested accuracy is not reached.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    area = sphere_area(d)
    integrand = lambda r: r ** (d - 1) * f(r)
    if np.isfinite(upper):
        val, _ = gauss_kronrod(integrand, 0.0, float(upper), rel_tol, abs_tol, breakpoints)
        return area * val
    if tail == "taper":
        res = integrate_to_infinity(integrand, scale, rel_tol=rel_tol, abs_tol=abs_tol)
        if not res.converged:
            raise QuadratureError(f"tail sequence did not converge ({res.method})", area * res.value,
                                  area * res.error)
        return area * res.value

    def mapped(s):
        r = s / (1.0 - s)
        return integrand(r) / (1.0 - s) ** 2

    bps = None
    if breakpoints is not None:
        bp = np.asarray(breakpoints, dtype=float)
        bps = bp / (1.0 + bp)
    else:
        # a few breakpoints around the natural length scale help the first pass
        bps = np.array([0.25, 0.5, 1, 2, 4, 8]) * scale
        bps = bps / (1.0 + bps)
    val, _ = gauss_kronrod(mapped, 0.0, 1.0, rel_tol, abs_tol, bps)
    return area * val


def _hankel_factor(d, t):
    nu = 0.5 * (d - 2)
    return nu, 2.0 * np.pi * t ** (-nu)


def hankel_fourier(f, d, t, support=np.inf, rel_tol=DEFAULT_REL_TOL, *, scale=1.0,
                   abs_tol=1e-13):
    """d-dimensional Fourier transform of the radial profile ``f`` at frequency |t|.

    Convention: F(f)(t) = int f(|x|) exp(2 i pi x.t) dx, so for a radial
    profile F(f)(t) = 2 pi t^{-nu} int_0^inf r^{d/2} f(r) J_nu(2 pi r t) dr
    with nu = (d - 2)/2.

    Parameters
    ----------
    support : float
        Radius beyond which ``f`` vanishes, or ``inf``.
    scale : float
        Characteristic oscillation/decay length of ``f``; used for panel
        placement on infinite supports.
    """
    t = float(t)
    if t < 0:
        raise ValueError("frequency must be non-negative")
    if t == 0:
        if np.isfinite(support):
            return integrate_radial(f, d, support, rel_tol, abs_tol=abs_tol,
                                    breakpoints=np.arange(0.0, support, 0.5 * scale))
        return integrate_radial(f, d, np.inf, rel_tol, abs_tol=abs_tol, tail="taper", scale=scale)
    nu, pref = _hankel_factor(d, t)
    half_period = 0.5 / t
    step = min(half_period, scale)
    integrand = lambda r: r ** (0.5 * d) * f(r) * bessel_j(nu, 2.0 * np.pi * t * r)
    if np.isfinite(support):
        bps = np.arange(0.0, support, step)
        val, _ = gauss_kronrod(integrand, 0.0, float(support), rel_tol, abs_tol / pref, bps)
        return pref * val
    if t * scale > 1e3:
        warnings.warn("highly oscillatory Hankel integrand on an infinite support", RuntimeWarning,
                      stacklevel=2)
    res = integrate_to_infinity(integrand, step, rel_tol=rel_tol, abs_tol=abs_tol / pref,
                                t0=max(40.0 * scale, 40.0 * step))
    if not res.converged:
        raise QuadratureError(f"Hankel tail did not converge ({res.method})", pref * res.value,
                              pref * res.error)
    return pref * res.value


def hankel_transform_grid(values_fn, d, ts, upper, n_panels, nodes_per_panel=20, taper=False):
    """Hankel transforms of one profile at many frequencies with a fixed rule.

    Uses composite Gauss-Legendre on [0, upper]; all frequencies share the
    nodes so the cost is one matrix of Bessel values.  ``n_panels`` must
    resolve the highest frequency requested (about four panels per period of
    J_nu(2 pi r t_max)).  With ``taper`` the profile is multiplied by the
    flat-top window of length ``upper``.

    Returns
    -------
    ndarray of the transform values at ``ts``.
    """
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.linspace(0.0, upper, n_panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    r = ((a + b) / 2 + (b - a) / 2 * x).ravel()
    wr = ((b - a) / 2 * w).ravel()
    prof = np.asarray(values_fn(r), dtype=float)
    if taper:
        prof = prof * flat_top_taper(r / upper)
    ts = np.asarray(ts, dtype=float)
    nu = 0.5 * (d - 2)
    out = np.empty(ts.shape)
    flat_t = ts.ravel()
    res = out.ravel()
    area = sphere_area(d)
    chunk = max(1, 4_000_000 // r.size)
    for s in range(0, flat_t.size, chunk):
        tt = flat_t[s:s + chunk]
        pos = tt > 0
        vals = np.empty(tt.size)
        if np.any(pos):
            tp = tt[pos]
            jm = bessel_j(nu, 2.0 * np.pi * np.outer(tp, r))
            vals[pos] = 2.0 * np.pi * tp ** (-nu) * (jm @ (wr * r ** (0.5 * d) * prof))
        if np.any(~pos):
            vals[~pos] = area * np.sum(wr * r ** (d - 1) * prof)
        res[s:s + chunk] = vals
    return res.reshape(ts.shape)


def bisect_root(h, lo, hi, tol=1e-12, max_iter=400):
    """Root of a continuous ``h`` on a sign-changing bracket [lo, hi] by bisection."""
    flo, fhi = h(lo), h(hi)
    if flo == 0:
        return float(lo)
    if fhi == 0:
        return float(hi)
    if np.sign(flo) == np.sign(fhi):
        raise ValueError(f"no sign change on [{lo}, {hi}]")
    for _ in range(max_iter):
        if abs(hi - lo) <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = h(mid)
        if fm == 0:
            return float(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return float(0.5 * (lo + hi))


_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def maximize_1d(h, lo, hi, grid_n=2048, tol=1e-10, vectorized=True):
    """Global maximum of ``h`` on [lo, hi]: grid scan then golden-section refinement.

    The refinement is restricted to the two grid cells adjacent to the best
    grid point.  A maximum narrower than the grid spacing can be missed.

    Returns
    -------
    argmax, max : float
    """
    if grid_n < 3:
        raise ValueError("grid_n must be >= 3")
    xs = np.linspace(lo, hi, grid_n)
    ys = np.asarray(h(xs), dtype=float) if vectorized else np.array([h(x) for x in xs])
    i = int(np.nanargmax(ys))
    best_x, best_y = float(xs[i]), float(ys[i])
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, grid_n - 1)]
    f1 = lambda x: float(h(np.array([x]))[0]) if vectorized else float(h(x))
    c = b - _INVPHI * (b - a)
    e = a + _INVPHI * (b - a)
    fc, fe = f1(c), f1(e)
    while abs(b - a) > tol:
        if fc > fe:
            b, e, fe = e, c, fc
            c = b - _INVPHI * (b - a)
            fc = f1(c)
        else:
            a, c, fc = c, e, fe
            e = a + _INVPHI * (b - a)
            fe = f1(e)
    for x, y in ((c, fc), (e, fe)):
        if y > best_y:
            best_x, best_y = float(x), float(y)
    return best_x, best_y
