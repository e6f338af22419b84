"""Repulsiveness functionals of a DPP kernel.

* global repulsiveness  int (1 - g) = (1/rho^2) int C^2
* local repulsiveness   Laplacian of g at 0,
  = (8 pi^2 / rho) int |t|^2 F(C)(t) dt
* the variance of counts in a rectangle.
"""

from dataclasses import dataclass, asdict
import csv
import enum
import math

import numpy as np

from .specfun import sphere_area
from .quadrature import integrate_to_infinity, gauss_kronrod, DEFAULT_REL_TOL
from .kernels import POISSON, RadialKernel

__all__ = [
    "LocalFlag",
    "ConsistencyError",
    "RepulsivenessSummary",
    "PcfCurve",
    "pcf",
    "pcf_curve",
    "global_repulsiveness",
    "local_repulsiveness",
    "local_repulsiveness_fd",
    "summarize",
    "compare",
    "count_variance",
    "write_pcf_csv",
    "read_pcf_csv",
    "format_float",
]


class LocalFlag(str, enum.Enum):
    NOT_TWICE_DIFFERENTIABLE = "not_twice_differentiable"
    G0_POSITIVE = "g0_positive"


class ConsistencyError(RuntimeError):
    """Two independent routes to the same quantity disagree."""


def format_float(x):
    return format(float(x), ".17g")


@dataclass(frozen=True)
class RepulsivenessSummary:
    global_: float
    local: object
    rho: float
    d: int

    def to_dict(self):
        out = {"global": self.global_, "rho": self.rho, "d": self.d}
        if isinstance(self.local, LocalFlag):
            out["local"] = None
            out["local_flag"] = self.local.value
        else:
            out["local"] = self.local
            out["local_flag"] = None
        return out


@dataclass(frozen=True)
class PcfCurve:
    radii: np.ndarray
    values: np.ndarray
    kind: str = "theoretical"

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.shape != v.shape:
            raise ValueError("radii and values differ in length")
        if r.size > 1 and np.any(np.diff(r) <= 0):
            raise ValueError("radii must be strictly ascending")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)


def pcf(kernel, r):
    """g(r) = 1 - C(r)^2 / rho^2.

    The Poisson kernel has g = 1 everywhere (the version of g with the fewest
    discontinuities).
    """
    if kernel.spec.family == POISSON:
        r = np.asarray(r, dtype=float)
        out = np.ones(r.shape)
        return out if out.ndim else 1.0
    c = np.asarray(kernel.eval(r), dtype=float)
    rho = kernel.rho
    if np.any(np.abs(c) > rho * (1 + 1e-9)):
        raise AssertionError(f"|C(r)| exceeds rho={rho}: the kernel is broken")
    out = 1.0 - (c / rho) ** 2
    return out if out.ndim else float(out)


def pcf_curve(kernel, r_max, n):
    radii = np.linspace(0.0, r_max, n)
    return PcfCurve(radii, np.asarray(pcf(kernel, radii), dtype=float), "theoretical")


def write_pcf_csv(curve, path_or_file, header=("r", "g"), extra=None):
    """PcfCurve CSV, 17 significant digits, LF line endings."""
    cols = [curve.radii, curve.values] + ([np.asarray(extra)] if extra is not None else [])
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([format_float(x) for x in row])
    finally:
        if own:
            fh.close()


def read_pcf_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return PcfCurve(data[:, 0], data[:, 1])


def _radial_square_direct(kernel, rel_tol):
    d = kernel.d
    g = lambda r: r ** (d - 1) * kernel.eval(r) ** 2
    if math.isfinite(kernel.support_radius):
        R = kernel.support_radius
        bps = np.linspace(0.0, R, 33)
        return sphere_area(d) * gauss_kronrod(g, 0.0, R, rel_tol, 1e-15, bps)[0]
    res = integrate_to_infinity(g, kernel.scale, rel_tol=rel_tol, abs_tol=1e-15)
    if not res.converged:
        raise ConsistencyError(f"direct integral of C^2 did not converge ({res.method})")
    return sphere_area(d) * res.value


def _radial_square_spectral(kernel, rel_tol):
    d = kernel.d
    g = lambda t: t ** (d - 1) * kernel.fourier(t) ** 2
    ts = kernel.fourier_support_radius
    if math.isfinite(ts):
        step = min(kernel.fourier_scale, ts / 8)
        bps = np.arange(0.0, ts, step)
        return sphere_area(d) * gauss_kronrod(g, 0.0, ts, rel_tol, 1e-15, bps)[0]
    res = integrate_to_infinity(g, kernel.fourier_scale, rel_tol=rel_tol, abs_tol=1e-15)
    if not res.converged:
        raise ConsistencyError(f"Parseval integral did not converge ({res.method})")
    return sphere_area(d) * res.value


def global_repulsiveness(kernel, rel_tol=DEFAULT_REL_TOL, check_tol=1e-6):
    """int (1 - g) over R^d, by Parseval, cross-checked against direct quadrature of C^2."""
    if kernel.spec.family == POISSON:
        return 0.0
    rho2 = kernel.rho**2
    spectral = _radial_square_spectral(kernel, rel_tol) / rho2
    direct = _radial_square_direct(kernel, rel_tol) / rho2
    if abs(spectral - direct) > check_tol * abs(spectral):
        raise ConsistencyError(f"Parseval {spectral!r} and direct {direct!r} routes disagree")
    return float(spectral)


def local_repulsiveness(kernel, rel_tol=DEFAULT_REL_TOL):
    """Laplacian of g at 0, or a LocalFlag.

    Returns ``LocalFlag.G0_POSITIVE`` for the Poisson kernel and
    ``LocalFlag.NOT_TWICE_DIFFERENTIABLE`` when the spectral moment diverges.
    """
    if kernel.spec.family == POISSON:
        return LocalFlag.G0_POSITIVE
    d, rho = kernel.d, kernel.rho
    g = lambda t: t ** (d + 1) * kernel.fourier(t)
    ts = kernel.fourier_support_radius
    if math.isfinite(ts):
        step = min(kernel.fourier_scale, ts / 8)
        bps = np.arange(0.0, ts, step)
        moment = gauss_kronrod(g, 0.0, ts, rel_tol, 1e-15, bps)[0]
    else:
        res = integrate_to_infinity(g, kernel.fourier_scale, rel_tol=rel_tol, abs_tol=1e-15,
                                    max_doublings=14)
        if res.diverged or not res.converged:
            return LocalFlag.NOT_TWICE_DIFFERENTIABLE
        moment = res.value
    return float(8.0 * np.pi**2 / rho * sphere_area(d) * moment)


def local_repulsiveness_fd(kernel, h=1e-3):
    """Finite-difference Laplacian of g at 0 for a radial g: d * 2 (g(h) - g(0)) / h^2."""
    return kernel.d * 2.0 * (pcf(kernel, h) - pcf(kernel, 0.0)) / h**2


def summarize(kernel):
    return RepulsivenessSummary(global_repulsiveness(kernel), local_repulsiveness(kernel),
                                kernel.rho, kernel.d)


def _order(x, y, larger_wins, tol):
    if abs(x - y) <= tol * max(1.0, abs(x), abs(y)):
        return "equal"
    if larger_wins:
        return "X" if x > y else "Y"
    return "X" if x < y else "Y"


def compare(kernel_x, kernel_y, tol=1e-9):
    """Order two kernels by global and local repulsiveness.

    Values are "X", "Y" (the more repulsive one), "equal" or, for the local
    order when both pcfs fail to be twice differentiable, "incomparable".
    """
    if kernel_x.d != kernel_y.d or kernel_x.rho != kernel_y.rho:
        raise ValueError("kernels must share d and rho to be compared")
    gx, gy = global_repulsiveness(kernel_x), global_repulsiveness(kernel_y)
    lx, ly = local_repulsiveness(kernel_x), local_repulsiveness(kernel_y)
    fx, fy = isinstance(lx, LocalFlag), isinstance(ly, LocalFlag)
    if fx and fy:
        # the local order needs one side to be twice differentiable with g(0) = 0
        local = "incomparable"
    elif fx:
        local = "Y"
    elif fy:
        local = "X"
    else:
        local = _order(lx, ly, False, tol)
    return {"global_order": _order(gx, gy, True, tol), "local_order": local}


def _box_gl(f, highs, n):
    """Tensor composite Gauss-Legendre of f over prod [0, highs_i], n panels per axis."""
    x, w = np.polynomial.legendre.leggauss(10)
    axes, weights = [], []
    for hi in highs:
        edges = np.linspace(0.0, hi, n + 1)
        a, b = edges[:-1, None], edges[1:, None]
        axes.append(((a + b) / 2 + (b - a) / 2 * x).ravel())
        weights.append(((b - a) / 2 * w).ravel())
    d = len(highs)
    if d == 1:
        return float(np.sum(weights[0] * f(axes[0][:, None])))
    total = 0.0
    # loop over the first axis to bound memory
    rest = np.meshgrid(*axes[1:], indexing="ij")
    rest_w = np.ones(rest[0].shape)
    for i, wi in enumerate(np.meshgrid(*weights[1:], indexing="ij")):
        rest_w = rest_w * wi
    pts_rest = np.stack([r.ravel() for r in rest], axis=1)
    wr = rest_w.ravel()
    for z1, w1 in zip(axes[0], weights[0]):
        pts = np.column_stack([np.full(pts_rest.shape[0], z1), pts_rest])
        total += w1 * float(np.sum(wr * f(pts)))
    return total


def count_variance(kernel, window, rel_tol=1e-8, max_panels=512):
    """Var N(D) = rho |D| - rho^2 int_{D^2} (1 - g(y - x)) dx dy for a box D.

    The double integral equals int C(|z|)^2/rho^2 gamma_D(z) dz with the set
    covariance gamma_D(z) = prod (L_i - |z_i|)_+; by symmetry only the positive
    orthant is integrated.  Panels per axis are doubled until two successive
    values agree to ``rel_tol``.
    """
    lengths = np.asarray(window.upper, dtype=float) - np.asarray(window.lower, dtype=float)
    vol = float(np.prod(lengths))
    rho = kernel.rho
    if kernel.spec.family == POISSON:
        return rho * vol
    d = kernel.d
    highs = lengths.copy()
    if math.isfinite(kernel.support_radius):
        highs = np.minimum(highs, kernel.support_radius)

    def f(z):
        z = np.atleast_2d(z)
        r = np.sqrt(np.sum(z * z, axis=1))
        cov = np.prod(lengths[None, :] - z, axis=1)
        return kernel.eval(r) ** 2 * cov

    n = max(4, int(math.ceil(float(np.max(highs)) / kernel.scale / 4)))
    prev = None
    while True:
        val = 2.0**d * _box_gl(f, highs, n)
        if prev is not None and abs(val - prev) <= rel_tol * max(abs(val), 1e-300):
            break
        if n >= max_panels:
            raise ConsistencyError(f"count variance integral not converged ({prev!r}, {val!r})")
        prev = val
        n *= 2
    return float(rho * vol - val)
