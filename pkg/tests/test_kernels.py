import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpp_repulse import kernels as kc
from dpp_repulse.kernels import (BESSEL, LAGUERRE_GAUSS, MOST_REPULSIVE, POISSON, COMPACT_U,
                                 SMOOTHED_TRUNCATION, COMPACT_OPTIMAL, KernelSpec, SpecError,
                                 alpha_max, lg_alpha_max_limit, limit_check, make_kernel, validate)
from dpp_repulse.quadrature import hankel_fourier
from oracles import laguerre_exact

INV_SQRT_PI = 1 / math.sqrt(math.pi)


def hankel_of(k, t):
    return hankel_fourier(k.eval, k.d, t, support=k.support_radius, scale=k.scale)


# ---------------------------------------------------------------- specs

def test_spec_rejects_bad_parameters():
    with pytest.raises(SpecError, match="d must be"):
        KernelSpec(MOST_REPULSIVE, d=0, rho=1.0)
    with pytest.raises(SpecError, match="rho"):
        KernelSpec(MOST_REPULSIVE, d=1, rho=-1.0)
    with pytest.raises(SpecError, match="sigma"):
        KernelSpec(BESSEL, d=2, rho=1.0, sigma=-1.0, alpha=0.3)
    with pytest.raises(SpecError, match="alpha"):
        KernelSpec(BESSEL, d=2, rho=1.0, sigma=0.0, alpha=0.0)
    with pytest.raises(SpecError, match="m must be"):
        KernelSpec(LAGUERRE_GAUSS, d=2, rho=1.0, m=1.5, alpha=0.3)
    with pytest.raises(SpecError, match="R"):
        KernelSpec(COMPACT_U, d=2, rho=1.0, R=-1, alpha=0.3)
    with pytest.raises(SpecError, match="unknown family"):
        KernelSpec("Cauchy", d=2, rho=1.0)
    with pytest.raises(SpecError, match="not used"):
        KernelSpec(MOST_REPULSIVE, d=2, rho=1.0, alpha=0.3)


@pytest.mark.parametrize("spec", [
    KernelSpec(MOST_REPULSIVE, d=3, rho=2.0),
    KernelSpec(BESSEL, d=2, rho=1.0, sigma=2.0, alpha=0.3),
    KernelSpec(LAGUERRE_GAUSS, d=1, rho=0.5, m=4, alpha=0.7),
    KernelSpec(COMPACT_U, d=2, rho=1.0, R=1.0, alpha=0.1),
    KernelSpec(COMPACT_OPTIMAL, d=1, rho=1.0, R=1.0),
    KernelSpec(POISSON, d=2, rho=1.0),
    KernelSpec(SMOOTHED_TRUNCATION, base=KernelSpec(MOST_REPULSIVE, d=1, rho=1.0), r=5.0),
])
def test_spec_json_round_trip(spec):
    text = spec.to_json()
    assert KernelSpec.from_json(text) == spec
    assert json.loads(text)["family"] == spec.family


def test_spec_json_field_names():
    obj = json.loads(KernelSpec(BESSEL, d=2, rho=1.0, sigma=0.0, alpha=0.4).to_json())
    assert obj == {"family": "BesselType", "d": 2, "rho": 1.0, "sigma": 0.0, "alpha": 0.4}
    obj = json.loads(KernelSpec(SMOOTHED_TRUNCATION, base=KernelSpec(MOST_REPULSIVE, d=1, rho=1.0),
                                r=5.0).to_json())
    assert obj == {"family": "SmoothedTruncation", "base": {"family": "MostRepulsive_CB", "d": 1,
                                                             "rho": 1.0}, "r": 5.0}


@pytest.mark.parametrize("obj", [
    {"family": "BesselType", "d": 2, "rho": 1, "sigma": 0, "alpha": 0.4, "beta": 1},
    {"d": 2, "rho": 1},
    {"family": "BesselType", "d": 2, "rho": "1", "sigma": 0, "alpha": 0.4},
    {"family": "MostRepulsive_CB", "d": True, "rho": 1},
    [1, 2],
])
def test_spec_from_dict_rejects(obj):
    with pytest.raises(SpecError):
        KernelSpec.from_dict(obj)


# ---------------------------------------------------------------- closed forms

def test_cb_d1_sinc():
    k = make_kernel(KernelSpec(MOST_REPULSIVE, d=1, rho=1.0))
    assert k.eval(0.5) == pytest.approx(2 / math.pi, abs=1e-15)
    rs = np.linspace(0.01, 10, 300)
    assert np.allclose(k.eval(rs), np.sin(np.pi * rs) / (np.pi * rs), atol=1e-14)


def test_cb_d3_closed_form():
    rho = 2.0
    k = make_kernel(KernelSpec(MOST_REPULSIVE, d=3, rho=rho))
    ts = (3 * rho / (4 * math.pi)) ** (1 / 3)
    rs = np.linspace(0.05, 6, 200)
    x = 2 * math.pi * ts * rs
    ref = rho * 3 * (np.sin(x) - x * np.cos(x)) / x**3
    assert np.allclose(k.eval(rs), ref, atol=1e-12)


@pytest.mark.parametrize("r", [0.3, 1.0, 2.0])
def test_bessel_sigma0_at_alpha_max_is_cb(r):
    cb = make_kernel(KernelSpec(MOST_REPULSIVE, d=2, rho=1.0))
    b = make_kernel(KernelSpec(BESSEL, d=2, rho=1.0, sigma=0.0, alpha=alpha_max(BESSEL, 2, 1.0, 0.0)))
    assert b.eval(r) == pytest.approx(cb.eval(r), abs=1e-14)


def test_laguerre_m1_is_gaussian():
    k = make_kernel(KernelSpec(LAGUERRE_GAUSS, d=2, rho=1.0, m=1, alpha=0.4))
    rs = np.linspace(0, 2, 50)
    assert np.allclose(k.eval(rs), np.exp(-(rs / 0.4) ** 2), atol=1e-15)


@pytest.mark.parametrize("m,d", [(3, 1), (5, 2), (8, 3)])
def test_laguerre_kernel_explicit(m, d):
    rho, a = 1.5, 0.35
    k = make_kernel(KernelSpec(LAGUERRE_GAUSS, d=d, rho=rho, m=m, alpha=a))
    binom = math.gamma(m + d / 2) / (math.gamma(m) * math.gamma(d / 2 + 1))
    for r in (0.0, 0.1, 0.4, 1.1):
        s = r * r / (m * a * a)
        ref = rho / binom * math.exp(-s) * laguerre_exact(m - 1, d / 2, s)
        assert k.eval(r) == pytest.approx(ref, rel=1e-12, abs=1e-15)


def test_bessel_fourier_closed_form_values():
    # (alpha/alpha_max)^d (1 - 2 pi^2 alpha^2 t^2 / (sigma + d))_+^{sigma/2}
    d, rho, sigma, a = 2, 1.0, 2.0, 0.3
    k = make_kernel(KernelSpec(BESSEL, d=d, rho=rho, sigma=sigma, alpha=a))
    amax = alpha_max(BESSEL, d, rho, sigma)
    for t in (0.0, 0.3, 0.6, 1.2):
        ref = (a / amax) ** d * max(0.0, 1 - 2 * math.pi**2 * a * a * t * t / (sigma + d)) ** (sigma / 2)
        assert k.fourier(t) == pytest.approx(ref, abs=1e-15)


# ---------------------------------------------------------------- alpha_max

def test_alpha_max_examples():
    assert alpha_max(BESSEL, 2, 1.0, 0.0) == pytest.approx(INV_SQRT_PI, abs=1e-15)
    assert alpha_max(LAGUERRE_GAUSS, 2, 1.0, 1) == pytest.approx(INV_SQRT_PI, abs=1e-15)
    assert lg_alpha_max_limit(2, 1.0) == pytest.approx(INV_SQRT_PI, abs=1e-15)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("rho", [0.5, 2.0])
def test_alpha_max_bessel_formula(d, rho):
    for sigma in (0.0, 1.0, 3.5):
        ref = ((sigma + d) ** (d / 2) * math.gamma((sigma + 2) / 2)
               / (rho * (2 * math.pi) ** (d / 2) * math.gamma((sigma + d + 2) / 2))) ** (1 / d)
        assert alpha_max(BESSEL, d, rho, sigma) == pytest.approx(ref, rel=1e-13)


def test_alpha_max_lg_approaches_limit():
    # at d = 2 the binomial equals m and alpha_max is the limit for every m
    for m in (1, 10, 10_000):
        assert alpha_max(LAGUERRE_GAUSS, 2, 1.0, m) == pytest.approx(lg_alpha_max_limit(2, 1.0), rel=1e-12)
    for d in (1, 3):
        lim = lg_alpha_max_limit(d, 1.0)
        gaps = [abs(alpha_max(LAGUERRE_GAUSS, d, 1.0, m) - lim) for m in (10, 100, 1000, 10_000)]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        # the gap is first order in 1/m
        assert gaps[-1] * 10_000 == pytest.approx(gaps[-2] * 1000, rel=1e-2)


def test_alpha_max_unsupported():
    with pytest.raises(SpecError):
        alpha_max(MOST_REPULSIVE, 2, 1.0, 0)
    with pytest.raises(SpecError):
        alpha_max(LAGUERRE_GAUSS, 2, 1.0, 0)


# ---------------------------------------------------------------- validate

def test_validate_examples():
    ok = validate(make_kernel(KernelSpec(BESSEL, d=2, rho=1.0, sigma=0.0, alpha=0.4)))
    assert ok.valid and ok.violation == "none"
    assert ok.sup_F == pytest.approx(math.pi * 0.16, rel=1e-14)
    assert ok.alpha_max == pytest.approx(INV_SQRT_PI)
    bad = validate(make_kernel(KernelSpec(BESSEL, d=2, rho=1.0, sigma=0.0, alpha=0.6)))
    assert not bad.valid and bad.violation == "F_exceeds_one"
    for d in (1, 2, 3):
        rep = validate(make_kernel(KernelSpec(MOST_REPULSIVE, d=d, rho=0.7)))
        assert rep.valid and rep.sup_F == 1.0


def test_validate_boundary_is_valid():
    a = alpha_max(LAGUERRE_GAUSS, 3, 1.0, 4)
    rep = validate(make_kernel(KernelSpec(LAGUERRE_GAUSS, d=3, rho=1.0, m=4, alpha=a)))
    assert rep.valid
    assert rep.sup_F == pytest.approx(1.0, rel=1e-13)


def test_validate_poisson():
    rep = validate(make_kernel(KernelSpec(POISSON, d=2, rho=1.0)))
    assert rep.valid


def test_validate_generic_route_detects_excess():
    # beyond R = M the compact family has a finite alpha_max (about 0.32 at R = 2M)
    R = 2 * 1.2337005501361697
    rep = validate(make_kernel(KernelSpec(COMPACT_U, d=1, rho=1.0, R=R, alpha=0.5)))
    assert not rep.valid
    assert rep.violation == "F_exceeds_one"
    assert rep.sup_F > 1


# ---------------------------------------------------------------- invariants

CLOSED = [
    KernelSpec(MOST_REPULSIVE, d=1, rho=1.0),
    KernelSpec(MOST_REPULSIVE, d=3, rho=0.5),
    KernelSpec(BESSEL, d=2, rho=1.0, sigma=0.0, alpha=0.4),
    KernelSpec(BESSEL, d=3, rho=2.0, sigma=5.0, alpha=0.2),
    KernelSpec(LAGUERRE_GAUSS, d=1, rho=1.0, m=1, alpha=0.4),
    KernelSpec(LAGUERRE_GAUSS, d=2, rho=1.0, m=7, alpha=0.5),
]


@pytest.mark.parametrize("spec", CLOSED, ids=lambda s: f"{s.family}-d{s.d}")
def test_eval_at_origin_exact(spec):
    assert make_kernel(spec).eval(0.0) == spec.rho


@pytest.mark.parametrize("spec", CLOSED + [
    KernelSpec(COMPACT_OPTIMAL, d=2, rho=1.0, R=1.0),
    KernelSpec(COMPACT_U, d=2, rho=1.0, R=1.0, alpha=0.1),
    KernelSpec(SMOOTHED_TRUNCATION, base=KernelSpec(BESSEL, d=2, rho=1.0, sigma=1.0, alpha=0.4), r=4.0),
], ids=lambda s: f"{s.family}-d{s.d}")
def test_fourier_in_unit_interval(spec):
    k = make_kernel(spec)
    assert validate(k).valid
    top = k.fourier_cutoff if np.isfinite(k.fourier_cutoff) else 10.0
    vals = k.fourier(np.linspace(0, 1.5 * top, 200))
    assert np.all(vals >= -1e-12) and np.all(vals <= 1 + 1e-12)


@pytest.mark.parametrize("spec", CLOSED[1:] + [KernelSpec(MOST_REPULSIVE, d=2, rho=1.0)],
                         ids=lambda s: f"{s.family}-d{s.d}")
@pytest.mark.parametrize("t", [0.0, 0.25, 0.5, 1.0, 2.0])
def test_fourier_matches_hankel(spec, t):
    k = make_kernel(spec)
    assert k.fourier(t) == pytest.approx(hankel_of(k, t), abs=1e-6)


@pytest.mark.parametrize("sigma", [0.0, 1.0, 4.0])
def test_bessel_fourier_vanishes_outside_support(sigma):
    k = make_kernel(KernelSpec(BESSEL, d=2, rho=1.0, sigma=sigma, alpha=0.3))
    ts = math.sqrt(sigma + 2) / (math.sqrt(2) * math.pi * 0.3)
    assert k.fourier_support_radius == pytest.approx(ts)
    out = np.linspace(ts * (1 + 1e-12), 5 * ts, 100)
    assert np.all(k.fourier(out) == 0.0)
    assert k.fourier(0.99 * ts) > 0


@given(st.integers(min_value=1, max_value=40), st.integers(min_value=1, max_value=3))
@settings(max_examples=30, deadline=None)
def test_laguerre_fourier_strictly_decreasing(m, d):
    a = 0.9 * alpha_max(LAGUERRE_GAUSS, d, 1.0, m)
    k = make_kernel(KernelSpec(LAGUERRE_GAUSS, d=d, rho=1.0, m=m, alpha=a))
    ts = np.linspace(0, 0.8 * k.fourier_cutoff, 200)
    vals = k.fourier(ts)
    assert np.all(np.diff(vals) <= 0)
    # strict wherever the decrease is resolvable in double precision
    resolved = (vals[1:] < vals[0] * (1 - 1e-12)) & (vals[1:] > 1e-250)
    assert np.all(np.diff(vals)[resolved] < 0)


def test_poisson_not_pointwise():
    k = make_kernel(KernelSpec(POISSON, d=2, rho=1.0))
    with pytest.raises(TypeError):
        k.eval(0.3)
    with pytest.raises(TypeError):
        k.fourier(0.3)


def test_make_kernel_from_dict():
    k = make_kernel({"family": "MostRepulsive_CB", "d": 2, "rho": 1})
    assert k.eval(0) == 1.0


# ---------------------------------------------------------------- limits

def test_limit_bessel_to_gaussian():
    k = make_kernel(KernelSpec(BESSEL, d=2, rho=1.0, sigma=1e3, alpha=0.4))
    dist = limit_check(k, lambda r: np.exp(-(r / 0.4) ** 2), 1.0)
    assert dist < 0.01


def test_limit_laguerre_to_cb():
    a = alpha_max(LAGUERRE_GAUSS, 2, 1.0, 200)
    k = make_kernel(KernelSpec(LAGUERRE_GAUSS, d=2, rho=1.0, m=200, alpha=a))
    cb = make_kernel(KernelSpec(MOST_REPULSIVE, d=2, rho=1.0))
    assert limit_check(k, cb, 2.0) < 0.05


def test_limit_self_is_zero():
    cb = make_kernel(KernelSpec(MOST_REPULSIVE, d=2, rho=1.0))
    assert limit_check([cb, cb], cb, 3.0) == [0.0, 0.0]


def test_limit_sequence_shrinks():
    gauss = lambda r: np.exp(-(r / 0.4) ** 2)
    ks = [make_kernel(KernelSpec(BESSEL, d=2, rho=1.0, sigma=s, alpha=0.4)) for s in (10, 100, 1000)]
    dist = limit_check(ks, gauss, 1.0)
    assert dist[0] > dist[1] > dist[2]
