"""Compactly supported kernels.

* ``optimal_CR``: the locally optimal kernel of range R <= M, C_R = u * u with
  a truncated Bessel profile u.
* ``family_u`` / ``compact_u_kernel``: the two-parameter profiles
  u = sqrt(rho) beta (1 - c J_nu(r/alpha)/r^nu) on the half-range ball, and
  C_2 = u * u.
* ``alpha_max_search`` / ``most_locally_repulsive``: the maximal-alpha rule
  used above the threshold M (a heuristic, labelled as such).
* ``smoothed_truncation``: C_r(x) = [h * h](2x/r) C(x) / ||h||^2 for a C-inf bump h.

Self-convolutions u * u are evaluated spectrally as inverse Hankel
transforms of F(u)^2 on a cached radial grid.
"""

from dataclasses import dataclass
from functools import lru_cache
import math
import threading

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from .specfun import bessel_j, bessel_first_zero, gamma_fn, lambda_fn, sphere_area
from .quadrature import hankel_transform_grid, maximize_1d
from .kernels import (KernelSpec, RadialKernel, COMPACT_U, COMPACT_OPTIMAL,
                      SMOOTHED_TRUNCATION, SpecError)

__all__ = [
    "constant_M",
    "CompactParams",
    "ProfileU",
    "family_u",
    "optimal_CR",
    "compact_u_kernel",
    "alpha_max_search",
    "most_locally_repulsive",
    "smoothed_truncation",
    "bump",
    "bump_selfconv_table",
    "ZeroCollisionError",
    "SearchError",
]


class ZeroCollisionError(ValueError):
    """R/(2 alpha) coincides with a zero of J_{(d-2)/2}."""


class SearchError(RuntimeError):
    pass


def constant_M(d, rho):
    """Threshold range M with M^d = 2^{d-2} j^2 Gamma(d/2) / (rho pi^{d/2})."""
    j = bessel_first_zero(0.5 * (d - 2))
    return (2.0 ** (d - 2) * j * j * gamma_fn(0.5 * d) / (rho * np.pi ** (0.5 * d))) ** (1.0 / d)


def _jratio(nu, w):
    """J_nu(w) / w^nu, continuous at w = 0."""
    w = np.asarray(w, dtype=float)
    out = np.empty(w.shape)
    small = w < 2.0
    if np.any(small):
        out[small] = lambda_fn(nu, w[small]) / (2.0**nu * special.gamma(nu + 1))
    big = ~small
    if np.any(big):
        wb = w[big]
        out[big] = special.jv(nu, wb) / wb**nu
    return out


def _jv(nu, x):
    # scipy directly: the compact formulas need order -1/2 and arrays
    return special.jv(nu, x)


# -- spectral self-convolution ----------------------------------------------

def _inverse_radial_table(F, d, R, t_max, n_grid=513):
    """Values on a grid of [0, R] of the radial function whose transform is F.

    F is integrated against the Hankel kernel on [0, t_max] under the flat-top
    taper, with panels resolving J_nu(2 pi R t).
    """
    grid = np.linspace(0.0, R, n_grid)
    n_panels = int(math.ceil(2.0 * R * t_max)) + 8
    vals = hankel_transform_grid(F, d, grid, t_max, n_panels, nodes_per_panel=12, taper=True)
    vals[-1] = 0.0
    return grid, vals


class _LazyTable:
    """One-time, thread-safe construction of a spline for u * u."""

    def __init__(self, build):
        self._build = build
        self._spline = None
        self._lock = threading.Lock()

    def __call__(self, r):
        if self._spline is None:
            with self._lock:
                if self._spline is None:
                    grid, vals = self._build()
                    self._spline = CubicSpline(grid, vals)
        return self._spline(r)


def _selfconv_eval(fourier, d, R, rho):
    # the transform of u*u decays like t^{-(d+3)}; t_max = 400/R keeps the
    # truncation error near 1e-10 relative
    t_max = 400.0 / R
    table = _LazyTable(lambda: _inverse_radial_table(fourier, d, R, t_max))

    def ev(r):
        r = np.asarray(r, dtype=float)
        out = np.where(r < R, table(np.minimum(r, R)), 0.0)
        return out

    return ev


# -- C_R -----------------------------------------------------------------------

def optimal_CR(d, rho, R):
    """Kernel C_R = u * u, u = kappa J_nu(2 j r / R) / r^nu on |x| < R/2, for R <= M."""
    M = constant_M(d, rho)
    if not R > 0:
        raise SpecError("R must be positive")
    if R > M * (1 + 1e-12):
        raise SpecError(f"R = {R} exceeds M = {M}; use most_locally_repulsive")
    nu = 0.5 * (d - 2)
    j = bessel_first_zero(nu)
    jp = 0.5 * (_jv(nu - 1, j) - _jv(nu + 1, j))
    kappa = math.sqrt(4.0 * gamma_fn(0.5 * d) / (rho * np.pi ** (0.5 * d) * R * R)) / abs(jp)
    amp = rho * np.pi ** (0.5 * d) * R**d * j * j * gamma_fn(0.5 * d)
    jpp = -jp / j  # Bessel equation at a zero

    def g_ratio(w):
        # J_nu(w) / (w^nu (j^2 - w^2)), removable singularity at w = j
        w = np.asarray(w, dtype=float)
        out = np.empty(w.shape)
        near = np.abs(w - j) < 1e-5
        far = ~near
        out[far] = _jratio(nu, w[far]) / (j * j - w[far] ** 2)
        wn = w[near]
        e = wn - j
        out[near] = -(jp + 0.5 * jpp * e) / ((j + wn) * wn**nu)
        return out

    def fo(t):
        return amp * g_ratio(np.pi * R * np.asarray(t, dtype=float)) ** 2

    def u(r):
        r = np.asarray(r, dtype=float)
        w = 2.0 * j * r / R
        val = kappa * (2.0 * j / R) ** nu * _jratio(nu, w)
        return np.where(r < 0.5 * R, val, 0.0)

    spec = KernelSpec(COMPACT_OPTIMAL, d=d, rho=rho, R=R)
    ev = _selfconv_eval(fo, d, R, rho)
    f_abs = lambda t: fo(t)
    return RadialKernel(spec, ev, fo, support_radius=R, fourier_max_at_origin=True,
                        scale=R / 16.0, fourier_scale=0.5 / R, fourier_cutoff=40.0 / R,
                        meta={"branch": "closed_form", "heuristic": False, "kappa": kappa,
                              "M": M, "j": j, "u": u, "fourier_abs": f_abs,
                              "fourier_nonnegative": True, "F0": (R / M) ** d})


# -- the u family -------------------------------------------------------------

@dataclass(frozen=True)
class CompactParams:
    d: int
    rho: float
    R: float
    alpha: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise SpecError("d must be an integer >= 1")
        for name in ("rho", "R", "alpha"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise SpecError(f"{name} must be a finite positive number")
        nu = 0.5 * (self.d - 2)
        z = self.R / (2.0 * self.alpha)
        jz = _jv(nu, z)
        jpz = 0.5 * (_jv(nu - 1, z) - _jv(nu + 1, z))
        # Newton step length to the nearest zero; zeros of J_nu are simple
        if jpz != 0 and abs(jz / jpz) < 1e-9 and z < _zero_bound(nu):
            raise ZeroCollisionError(f"R/(2 alpha) = {z} is a zero of J_{nu}")


@lru_cache(maxsize=None)
def _zero_bound(nu):
    # the 64th zero is below nu + 64 pi + pi for the orders in use
    return nu + 65.0 * np.pi


@dataclass(frozen=True)
class ProfileU:
    """The profile u on the half-range ball and its closed-form transform."""

    params: CompactParams
    beta: float
    gamma: float

    def eval_u(self, r):
        p = self.params
        nu = 0.5 * (p.d - 2)
        z = p.R / (2.0 * p.alpha)
        r = np.asarray(r, dtype=float)
        ratio = _jratio(nu, r / p.alpha) / _jratio(nu, np.array([z]))[0]
        val = math.sqrt(p.rho) * self.beta * (1.0 - ratio)
        return np.where(r <= 0.5 * p.R, val, 0.0)

    def fourier_u(self, t):
        p = self.params
        t = np.abs(np.asarray(t, dtype=float))
        x0 = 1.0 / (2.0 * np.pi * p.alpha)
        out = self._fourier_raw(t)
        near = np.abs(t - x0) < 1e-6 * x0
        if np.any(near):
            h = 1e-5 * x0
            out = np.where(near, 0.5 * (self._fourier_raw(t - h) + self._fourier_raw(t + h)), out)
        return out

    def _fourier_raw(self, x):
        p = self.params
        n = 0.5 * p.d
        nu = n - 1.0
        a, R = p.alpha, p.R
        z = R / (2.0 * a)
        w = np.pi * R * x
        c = 0.5 * np.pi * R * R
        a_n = c**n * _jratio(n, w)
        a_nu = c**nu * _jratio(nu, w)
        jz = _jv(nu, z)
        jpz = 0.5 * (_jv(nu - 1, z) - _jv(nu + 1, z))
        num = R * a * jpz * a_nu - 2.0 * a * a * jz * (nu * a_nu - 2.0 * np.pi * x * x * a_n)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = a_n + np.pi * num / (jz * (1.0 - 4.0 * np.pi**2 * a * a * x * x))
        return math.sqrt(p.rho) * self.beta * val


def _beta(d, R, a):
    n = 0.5 * d
    nu = n - 1.0
    z = R / (2.0 * a)
    j_nu = _jv(nu, z)
    j_n = _jv(n, z)
    j_nm2 = 2.0 * nu / z * j_nu - j_n  # J_{n-2} by recurrence
    inner = R / d - 4.0 * a * j_n / j_nu + 0.5 * R * (1.0 - j_nm2 * j_n / j_nu**2)
    pref = R ** (d - 1) * np.pi**n / (2.0 ** (d - 1) * gamma_fn(n))
    val = pref * inner
    if not (np.isfinite(val) and val > 0):
        raise SpecError(f"beta is not real and positive for R={R}, alpha={a} (inner={val})")
    return val ** -0.5


def family_u(params):
    """ProfileU for the given (d, rho, R, alpha)."""
    if not isinstance(params, CompactParams):
        params = CompactParams(*params)
    b = _beta(params.d, params.R, params.alpha)
    nu = 0.5 * (params.d - 2)
    z = params.R / (2.0 * params.alpha)
    gamma_c = math.sqrt(params.rho) * b * (0.5 * params.R) ** nu / _jv(nu, z)
    return ProfileU(params, b, gamma_c)


def compact_u_kernel(d, rho, R, alpha, meta=None):
    """C_2 = u * u for the profile of ``family_u``; F(C_2) = F(u)^2."""
    prof = family_u(CompactParams(d, rho, R, alpha))
    fo = lambda t: prof.fourier_u(t) ** 2
    spec = KernelSpec(COMPACT_U, d=d, rho=rho, R=R, alpha=alpha)
    info = {"beta": prof.beta, "gamma": prof.gamma, "alpha": alpha, "profile": prof,
            "fourier_abs": lambda t: np.abs(prof.fourier_u(t)), "fourier_nonnegative": True,
            "heuristic": False}
    if meta:
        info.update(meta)
    return RadialKernel(spec, _selfconv_eval(fo, d, R, rho), fo, support_radius=R,
                        fourier_max_at_origin=False, scale=min(R / 16.0, alpha),
                        fourier_scale=0.5 / R, fourier_cutoff=40.0 / R, meta=info)


def _sup_abs_fu(d, rho, R, alpha, grid_n):
    prof = family_u(CompactParams(d, rho, R, alpha))
    _, sup = maximize_1d(lambda t: np.abs(prof.fourier_u(t)), 0.0, 40.0 / R, grid_n=grid_n)
    return sup


def _feasible(d, rho, R, alpha, grid_n):
    try:
        return _sup_abs_fu(d, rho, R, alpha, grid_n) <= 1.0
    except ZeroCollisionError:
        return None


def alpha_max_search(d, rho, R, tol=1e-10, grid_n=2048, n_scan=400):
    """Largest alpha with sup_t |F(u)(t)| <= 1.

    The feasible set need not be an interval, so alpha is scanned downwards
    on a geometric grid from an infeasible start found by doubling; the first
    feasible grid point and its infeasible upper neighbour bracket the
    bisection.  Returns ``inf`` when every alpha up to 64 R is feasible
    (beyond that u is numerically the limiting parabola and the closed
    form loses precision to cancellation).
    """
    a_hi = R
    while _feasible(d, rho, R, a_hi, grid_n) is not False:
        a_hi *= 2.0
        if a_hi > 64.0 * R:
            return math.inf
    ratio = (1e-8) ** (1.0 / (n_scan * 4))
    prev = a_hi
    a = a_hi
    lo = None
    while a > 1e-8 * R:
        a *= ratio ** 4 if a < 1e-3 * R else ratio
        ok = _feasible(d, rho, R, a, grid_n)
        if ok:
            lo = a
            break
        if ok is False:
            prev = a
    if lo is None:
        raise SearchError("no feasible alpha found down to 1e-8 R")
    hi = prev
    while hi - lo > tol * max(lo, 1e-300):
        mid = 0.5 * (lo + hi)
        # an excluded alpha (zero collision) is treated as a boundary point
        ok = _feasible(d, rho, R, mid, grid_n)
        if ok:
            lo = mid
        else:
            hi = mid
    return lo


def most_locally_repulsive(d, rho, R, tol=1e-10):
    """Closed-form C_R when R <= M, else C_2 at the maximal feasible alpha (heuristic)."""
    M = constant_M(d, rho)
    if R <= M:
        return optimal_CR(d, rho, R)
    a = alpha_max_search(d, rho, R, tol=tol)
    if not np.isfinite(a):
        raise SearchError("alpha search did not find an infeasible start")
    k = compact_u_kernel(d, rho, R, a, meta={"branch": "heuristic", "heuristic": True, "M": M})
    k.spec = KernelSpec(COMPACT_OPTIMAL, d=d, rho=rho, R=R)
    return k


# -- smoothed truncation ------------------------------------------------------

def bump(r):
    """h(r) = exp(1/(r^2 - 1)) on the unit ball, 0 outside."""
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape)
    m = r < 1.0
    out[m] = np.exp(1.0 / (r[m] ** 2 - 1.0))
    return out


@lru_cache(maxsize=None)
def bump_selfconv_table(d, n_grid=2048):
    """(grid, values) of h * h on [0, 2], computed spectrally from F(h)^2."""
    q_max = 80.0
    # F(h) on the nodes of the inverse-transform rule
    n_q_panels = int(q_max * 2)
    x, w = np.polynomial.legendre.leggauss(12)
    edges = np.linspace(0.0, q_max, n_q_panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    q = ((a + b) / 2 + (b - a) / 2 * x).ravel()
    fh = hankel_transform_grid(bump, d, q, 1.0, int(q_max * 1.5) + 8)
    table_q = np.concatenate([[0.0], q, [q_max]])
    table_f = np.concatenate([[hankel_transform_grid(bump, d, [0.0], 1.0, 64)[0]], fh, [0.0]])
    f2 = CubicSpline(table_q, table_f**2)
    grid = np.linspace(0.0, 2.0, n_grid)
    vals = hankel_transform_grid(lambda t: f2(t), d, grid, q_max, n_q_panels, nodes_per_panel=12)
    vals[-1] = 0.0
    return grid, vals


@lru_cache(maxsize=None)
def _bump_spline(d):
    grid, vals = bump_selfconv_table(d)
    return CubicSpline(grid, vals), vals[0]


def smoothed_truncation(base, r, n_fourier=2048):
    """C_r(x) = [h * h](2x/r) C(x) / ||h||^2, supported on the r-ball."""
    if not r > 0:
        raise SpecError("r must be positive")
    if not base.pointwise:
        raise SpecError("base kernel must be pointwise evaluable")
    d, rho = base.d, base.rho
    spline, norm2 = _bump_spline(d)

    def ev(x):
        x = np.asarray(x, dtype=float)
        s = np.minimum(2.0 * x / r, 2.0)
        return np.where(x < r, spline(s) / norm2 * base.eval(x), 0.0)

    # the window transform has width ~ 2 q_eff / r with F(h)^2 negligible past q_eff ~ 30
    t_cut = base.fourier_cutoff + 60.0 / r
    if not np.isfinite(t_cut):
        raise SpecError("base kernel needs a finite Fourier cutoff")
    lock = threading.Lock()
    cache = {}

    def table():
        if "s" not in cache:
            with lock:
                if "s" not in cache:
                    ts = np.linspace(0.0, t_cut, n_fourier)
                    n_panels = int(math.ceil(2.0 * r * t_cut + r / base.scale)) + 16
                    vals = hankel_transform_grid(ev, d, ts, r, n_panels)
                    cache["s"] = CubicSpline(ts, vals)
        return cache["s"]

    def fo(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= t_cut, table()(np.minimum(t, t_cut)), 0.0)

    spec = KernelSpec(SMOOTHED_TRUNCATION, base=base.spec, r=r)
    return RadialKernel(spec, ev, fo, support_radius=r, fourier_support_radius=t_cut,
                        scale=min(base.scale, r / 16.0), fourier_scale=min(base.fourier_scale, 1.0 / r),
                        fourier_cutoff=t_cut, meta={"base": base, "h_norm2": norm2})
