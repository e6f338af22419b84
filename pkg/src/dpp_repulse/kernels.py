"""Stationary isotropic DPP kernels: specs, closed forms and the existence check.

Fourier convention: F(h)(t) = int h(x) exp(2 i pi x.t) dx.  A kernel C with
C(0) = rho defines a DPP iff 0 <= F(C) <= 1.
"""

from dataclasses import dataclass, field, asdict
import json
import math

import numpy as np
from scipy import special

from .specfun import lambda_fn, gammaln_fn, laguerre, ball_volume, log_gamma_ratio
from .quadrature import maximize_1d

__all__ = [
    "MOST_REPULSIVE",
    "BESSEL",
    "LAGUERRE_GAUSS",
    "COMPACT_U",
    "SMOOTHED_TRUNCATION",
    "COMPACT_OPTIMAL",
    "POISSON",
    "FAMILIES",
    "KernelSpec",
    "RadialKernel",
    "ValidityReport",
    "make_kernel",
    "alpha_max",
    "lg_alpha_max_limit",
    "validate",
    "limit_check",
    "jinc_radius",
]

MOST_REPULSIVE = "MostRepulsive_CB"
BESSEL = "BesselType"
LAGUERRE_GAUSS = "LaguerreGauss"
COMPACT_U = "CompactU"
SMOOTHED_TRUNCATION = "SmoothedTruncation"
COMPACT_OPTIMAL = "CompactOptimal"
POISSON = "PoissonDegenerate"
FAMILIES = (MOST_REPULSIVE, BESSEL, LAGUERRE_GAUSS, COMPACT_U, SMOOTHED_TRUNCATION,
            COMPACT_OPTIMAL, POISSON)

# JSON fields accepted per family (besides "family")
_FIELDS = {
    MOST_REPULSIVE: ("d", "rho"),
    POISSON: ("d", "rho"),
    BESSEL: ("d", "rho", "sigma", "alpha"),
    LAGUERRE_GAUSS: ("d", "rho", "m", "alpha"),
    COMPACT_U: ("d", "rho", "R", "alpha"),
    COMPACT_OPTIMAL: ("d", "rho", "R"),
    SMOOTHED_TRUNCATION: ("base", "r", "d", "rho"),
}


class SpecError(ValueError):
    """Invalid kernel parameters."""


def _positive(name, value):
    if value is None or not np.isfinite(value) or value <= 0:
        raise SpecError(f"{name} must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class KernelSpec:
    """Parameters of a kernel family.

    Only the fields relevant to ``family`` are set; the others stay ``None``.
    For ``SmoothedTruncation`` the dimension and intensity come from ``base``.
    """

    family: str
    d: int = None
    rho: float = None
    sigma: float = None
    m: int = None
    alpha: float = None
    R: float = None
    r: float = None
    base: "KernelSpec" = None

    def __post_init__(self):
        fam = self.family
        if fam not in FAMILIES:
            raise SpecError(f"unknown family {fam!r}; expected one of {', '.join(FAMILIES)}")
        if fam == SMOOTHED_TRUNCATION:
            if not isinstance(self.base, KernelSpec):
                raise SpecError("SmoothedTruncation needs a base kernel spec")
            if self.base.family in (POISSON, SMOOTHED_TRUNCATION):
                raise SpecError(f"cannot truncate a {self.base.family} kernel")
            if self.d is not None and self.d != self.base.d:
                raise SpecError("d differs from the base kernel")
            if self.rho is not None and self.rho != self.base.rho:
                raise SpecError("rho differs from the base kernel")
            object.__setattr__(self, "d", self.base.d)
            object.__setattr__(self, "rho", self.base.rho)
            _positive("r", self.r)
        if isinstance(self.d, bool) or not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise SpecError(f"d must be an integer >= 1, got {self.d!r}")
        object.__setattr__(self, "d", int(self.d))
        _positive("rho", self.rho)
        allowed = set(_FIELDS[fam])
        for name in ("sigma", "m", "alpha", "R", "r", "base"):
            if name not in allowed and getattr(self, name) is not None:
                raise SpecError(f"field {name!r} is not used by family {fam}")
        if fam == BESSEL:
            if self.sigma is None or not np.isfinite(self.sigma) or self.sigma < 0:
                raise SpecError(f"sigma must be >= 0, got {self.sigma!r}")
            _positive("alpha", self.alpha)
        elif fam == LAGUERRE_GAUSS:
            m = self.m
            if isinstance(m, float) and m.is_integer():
                m = int(m)
            if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 1:
                raise SpecError(f"m must be an integer >= 1, got {self.m!r}")
            object.__setattr__(self, "m", int(m))
            _positive("alpha", self.alpha)
        elif fam == COMPACT_U:
            _positive("R", self.R)
            _positive("alpha", self.alpha)
        elif fam == COMPACT_OPTIMAL:
            _positive("R", self.R)

    def to_dict(self):
        out = {"family": self.family}
        for name in _FIELDS[self.family]:
            if name == "base":
                out["base"] = self.base.to_dict()
            elif name in ("d", "rho") and self.family == SMOOTHED_TRUNCATION:
                continue
            else:
                out[name] = getattr(self, name)
        return out

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj):
        if not isinstance(obj, dict):
            raise SpecError("kernel spec must be a JSON object")
        if "family" not in obj:
            raise SpecError("kernel spec lacks the 'family' field")
        fam = obj["family"]
        if fam not in _FIELDS:
            raise SpecError(f"unknown family {fam!r}")
        unknown = set(obj) - set(_FIELDS[fam]) - {"family"}
        if unknown:
            raise SpecError(f"unknown fields for {fam}: {sorted(unknown)}")
        kw = {k: v for k, v in obj.items() if k != "family"}
        if "base" in kw:
            kw["base"] = cls.from_dict(kw["base"])
        for k, v in kw.items():
            if k != "base" and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise SpecError(f"field {k!r} must be a number")
        return cls(family=fam, **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


class RadialKernel:
    """A kernel C(|x|) with its radial Fourier transform F(C)(|t|).

    Attributes
    ----------
    spec : KernelSpec
    support_radius, fourier_support_radius : float
        ``inf`` when unbounded.
    fourier_max_at_origin : bool
        Whether F(C) is known to peak at t = 0.
    scale : float
        Length over which C oscillates or decays; drives quadrature panels.
    fourier_scale : float
        Same for F(C) in frequency.
    fourier_cutoff : float
        Frequency beyond which F(C) is negligible (or zero).
    pointwise : bool
        False for the degenerate Poisson kernel.
    meta : dict
        Family-specific extras (alpha_max, beta, heuristic flag, ...).
    """

    def __init__(self, spec, eval_fn, fourier_fn, *, support_radius=math.inf,
                 fourier_support_radius=math.inf, fourier_max_at_origin=False, scale=1.0,
                 fourier_scale=None, fourier_cutoff=None, pointwise=True, meta=None):
        self.spec = spec
        self._eval = eval_fn
        self._fourier = fourier_fn
        self.support_radius = float(support_radius)
        self.fourier_support_radius = float(fourier_support_radius)
        self.fourier_max_at_origin = bool(fourier_max_at_origin)
        self.scale = float(scale)
        self.fourier_scale = float(fourier_scale if fourier_scale is not None else 1.0 / scale)
        if fourier_cutoff is None:
            fourier_cutoff = fourier_support_radius
        self.fourier_cutoff = float(fourier_cutoff)
        self.pointwise = pointwise
        self.meta = dict(meta or {})

    @property
    def d(self):
        return self.spec.d

    @property
    def rho(self):
        return self.spec.rho

    def eval(self, r):
        """C at radius ``r`` (scalar or array)."""
        if not self.pointwise:
            raise TypeError(f"{self.spec.family} kernel has no pointwise values")
        r = np.abs(np.asarray(r, dtype=float))
        out = np.asarray(self._eval(r), dtype=float)
        if np.isfinite(self.support_radius):
            out = np.where(r >= self.support_radius, 0.0, out)
        return out if out.ndim else float(out)

    def fourier(self, t):
        """F(C) at frequency ``t`` (scalar or array)."""
        if not self.pointwise:
            raise TypeError(f"{self.spec.family} kernel has no pointwise Fourier transform")
        t = np.abs(np.asarray(t, dtype=float))
        out = np.asarray(self._fourier(t), dtype=float)
        if np.isfinite(self.fourier_support_radius):
            out = np.where(t > self.fourier_support_radius, 0.0, out)
        return out if out.ndim else float(out)

    def __repr__(self):
        return f"RadialKernel({self.spec.to_json()})"


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    sup_F: float
    argsup_t: float
    alpha_max: float = None
    violation: str = "none"
    inf_F: float = None

    def to_dict(self):
        return asdict(self)


def jinc_radius(d, rho):
    """Radius of the ball of volume rho, i.e. the support of F(C_B)."""
    return (rho / ball_volume(d)) ** (1.0 / d)


def _make_jinc(spec):
    d, rho = spec.d, spec.rho
    ts = jinc_radius(d, rho)
    c = 2.0 * np.pi * ts

    def ev(r):
        return rho * lambda_fn(0.5 * d, c * r)

    def fo(t):
        return np.where(t <= ts, 1.0, 0.0)

    return RadialKernel(spec, ev, fo, fourier_support_radius=ts, fourier_max_at_origin=True,
                        scale=np.pi / c, fourier_scale=ts, meta={"t_support": ts})


def _bessel_alpha_max(d, rho, sigma):
    logv = (0.5 * d * math.log(sigma + d) + gammaln_fn(0.5 * (sigma + 2))
            - math.log(rho) - 0.5 * d * math.log(2 * math.pi) - gammaln_fn(0.5 * (sigma + d + 2)))
    return math.exp(logv / d)


def _make_bessel(spec):
    d, rho, sigma, a = spec.d, spec.rho, spec.sigma, spec.alpha
    mu = 0.5 * (sigma + d)
    amax = _bessel_alpha_max(d, rho, sigma)
    f0 = (a / amax) ** d
    ts = math.sqrt(sigma + d) / (math.sqrt(2.0) * math.pi * a)
    k = 2.0 * math.sqrt(mu) / a

    def ev(r):
        return rho * lambda_fn(mu, k * r)

    def fo(t):
        base = np.clip(1.0 - 2.0 * np.pi**2 * a * a * t * t / (sigma + d), 0.0, None)
        if sigma == 0:
            return np.where(t <= ts, f0, 0.0)
        return f0 * base ** (0.5 * sigma)

    # C oscillates with half-period pi/k; for large sigma it first decays like
    # a Gaussian of width alpha
    return RadialKernel(spec, ev, fo, fourier_support_radius=ts, fourier_max_at_origin=True,
                        scale=min(np.pi / k, a), fourier_scale=ts / 8,
                        meta={"alpha_max": amax, "t_support": ts})


def _lg_log_binom(m, d):
    # binom(m - 1 + d/2, m - 1)
    return log_gamma_ratio(m, 0.5 * d) - gammaln_fn(0.5 * d + 1)


def _lg_alpha_max(d, rho, m):
    logv = _lg_log_binom(m, d) - math.log(rho) - 0.5 * d * math.log(m * math.pi)
    return math.exp(logv / d)


def lg_alpha_max_limit(d, rho):
    """Limit of the Laguerre-Gauss alpha_max as m grows."""
    return 1.0 / (math.sqrt(math.pi) * math.gamma(0.5 * d + 1) ** (1.0 / d) * rho ** (1.0 / d))


def _make_laguerre(spec):
    d, rho, m, a = spec.d, spec.rho, spec.m, spec.alpha
    amax = _lg_alpha_max(d, rho, m)
    log_binom = _lg_log_binom(m, d)
    f0 = (a / amax) ** d

    # L_{m-1}^{d/2}(0) is the binomial; dividing by the recurrence value keeps C(0) = rho exactly
    l0 = laguerre(m - 1, 0.5 * d, 0.0)

    def ev(r):
        s = r * r / (m * a * a)
        return rho * np.exp(-s) * (laguerre(m - 1, 0.5 * d, s) / l0)

    def fo(t):
        return f0 * special.gammaincc(m, m * (np.pi * a * t) ** 2)

    # F is negligible once m (pi a t)^2 exceeds m + 12 sqrt(m) + 40
    cut = math.sqrt((m + 12 * math.sqrt(m) + 40) / m) / (np.pi * a)
    scale = a / math.sqrt(m) if m > 1 else a
    return RadialKernel(spec, ev, fo, fourier_max_at_origin=True, scale=min(scale, a),
                        fourier_scale=1.0 / (np.pi * a * math.sqrt(m)), fourier_cutoff=cut,
                        meta={"alpha_max": amax})


def _make_poisson(spec):
    return RadialKernel(spec, None, None, fourier_max_at_origin=False, pointwise=False,
                        fourier_cutoff=0.0)


def make_kernel(spec):
    """Build the RadialKernel described by ``spec`` (a KernelSpec or a dict)."""
    if isinstance(spec, dict):
        spec = KernelSpec.from_dict(spec)
    fam = spec.family
    if fam == MOST_REPULSIVE:
        return _make_jinc(spec)
    if fam == BESSEL:
        return _make_bessel(spec)
    if fam == LAGUERRE_GAUSS:
        return _make_laguerre(spec)
    if fam == POISSON:
        return _make_poisson(spec)
    from . import compact

    if fam == COMPACT_U:
        return compact.compact_u_kernel(spec.d, spec.rho, spec.R, spec.alpha)
    if fam == COMPACT_OPTIMAL:
        return compact.most_locally_repulsive(spec.d, spec.rho, spec.R)
    if fam == SMOOTHED_TRUNCATION:
        return compact.smoothed_truncation(make_kernel(spec.base), spec.r)
    raise SpecError(f"unsupported family {fam}")


def alpha_max(family, d, rho, sigma_or_m):
    """Closed-form largest admissible alpha for the BesselType and LaguerreGauss families."""
    if family == BESSEL:
        if sigma_or_m < 0:
            raise SpecError("sigma must be >= 0")
        return _bessel_alpha_max(d, rho, sigma_or_m)
    if family == LAGUERRE_GAUSS:
        if int(sigma_or_m) != sigma_or_m or sigma_or_m < 1:
            raise SpecError("m must be an integer >= 1")
        return _lg_alpha_max(d, rho, int(sigma_or_m))
    raise SpecError(f"no closed-form alpha_max for family {family}")


VALIDITY_TOL = 1e-9


def validate(kernel, grid_n=2048):
    """Check 0 <= F(C) <= 1 and locate sup F(C).

    Families with a closed-form alpha_max and a Fourier transform peaking at
    the origin are decided by alpha <= alpha_max; the others by a grid scan
    of F(C) over [0, fourier_cutoff] refined around the largest |F(C)|.
    """
    spec = kernel.spec
    if spec.family == POISSON:
        # F(C) vanishes almost everywhere; the process is the Poisson process
        return ValidityReport(True, 0.0, 0.0, None, "none", 0.0)
    if spec.family in (BESSEL, LAGUERRE_GAUSS):
        amax = kernel.meta["alpha_max"]
        sup = float(kernel.fourier(0.0))
        ok = spec.alpha <= amax * (1 + 1e-12)
        return ValidityReport(ok, sup, 0.0, amax, "none" if ok else "F_exceeds_one", 0.0)
    if spec.family == MOST_REPULSIVE:
        return ValidityReport(True, 1.0, 0.0, None, "none", 0.0)
    t_cut = kernel.fourier_cutoff
    if "fourier_abs" in kernel.meta:
        absf = kernel.meta["fourier_abs"]
    else:
        absf = lambda t: np.abs(kernel.fourier(t))
    t_arg, sup = maximize_1d(absf, 0.0, t_cut, grid_n=grid_n)
    grid = np.linspace(0.0, t_cut, grid_n)
    vals = kernel.fourier(grid)
    inf_f = float(np.min(vals))
    if kernel.meta.get("fourier_nonnegative"):
        inf_f = max(inf_f, 0.0)
    sup_f = float(np.max(vals)) if inf_f >= 0 else sup
    if sup_f < sup:
        sup_f = sup
    violation = "none"
    if inf_f < -VALIDITY_TOL:
        violation = "F_negative"
    elif sup_f > 1 + VALIDITY_TOL:
        violation = "F_exceeds_one"
    return ValidityReport(violation == "none", sup_f, t_arg, kernel.meta.get("alpha_max"),
                          violation, inf_f)


def limit_check(kernels, limit, r_max, n=1001):
    """Sup-norm distances on a grid of [0, r_max] between each kernel and ``limit``.

    ``limit`` may be a RadialKernel or a plain callable of r.
    """
    grid = np.linspace(0.0, r_max, n)
    ref = limit.eval(grid) if isinstance(limit, RadialKernel) else np.asarray(limit(grid))
    single = isinstance(kernels, RadialKernel)
    ks = [kernels] if single else list(kernels)
    out = [float(np.max(np.abs(k.eval(grid) - ref))) for k in ks]
    return out[0] if single else out
