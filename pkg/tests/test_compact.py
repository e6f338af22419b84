import math

import numpy as np
import pytest
from scipy import integrate

from dpp_repulse import compact as cp
from dpp_repulse.compact import (CompactParams, ZeroCollisionError, alpha_max_search,
                                 compact_u_kernel, constant_M, family_u, most_locally_repulsive,
                                 optimal_CR, smoothed_truncation)
from dpp_repulse.kernels import (BESSEL, COMPACT_OPTIMAL, MOST_REPULSIVE, KernelSpec, SpecError,
                                 make_kernel, validate)
from dpp_repulse.metrics import global_repulsiveness, local_repulsiveness, pcf
from dpp_repulse.quadrature import hankel_fourier, integrate_radial, maximize_1d
from dpp_repulse.specfun import bessel_first_zero

# Frozen output of the maximal-alpha search at d = 1, rho = 1, R = 2M (tol 1e-10).
ALPHA_AT_2M_D1 = 0.3219288774


def real_space_selfconv_1d(u, R, r):
    """(u * u)(r) in d = 1 by scipy quad over the half-range support."""
    lo, hi = max(-R / 2, r - R / 2), min(R / 2, r + R / 2)
    if lo >= hi:
        return 0.0
    return integrate.quad(lambda x: float(u(abs(x))) * float(u(abs(r - x))), lo, hi,
                          epsabs=1e-13, epsrel=1e-12, limit=200, points=[0.0, r])[0]


# ---------------------------------------------------------------- M

@pytest.mark.parametrize("d,expected", [
    (1, math.pi**2 / 8),
    (2, 2.404825557695773 / math.sqrt(math.pi)),
    (3, math.pi ** (1 / 3)),
])
def test_constant_M(d, expected):
    assert constant_M(d, 1.0) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_constant_M_scaling(d):
    assert constant_M(d, 3.0) * 3.0 ** (1 / d) == pytest.approx(constant_M(d, 1.0), rel=1e-14)


# ---------------------------------------------------------------- C_R

@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("frac", [0.5, 1.0])
def test_cr_fourier_at_origin(d, frac):
    M = constant_M(d, 1.0)
    k = optimal_CR(d, 1.0, frac * M)
    assert k.fourier(0.0) == pytest.approx(frac**d, abs=1e-12)
    assert k.meta["branch"] == "closed_form"


def test_cr_rejects_range_beyond_M():
    with pytest.raises(SpecError):
        optimal_CR(2, 1.0, 1.01 * constant_M(2, 1.0))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_cr_fourier_bounded_by_origin(d):
    R = 0.9 * constant_M(d, 1.0)
    k = optimal_CR(d, 1.0, R)
    vals = k.fourier(np.linspace(0, 40 / R, 500))
    assert np.all(vals >= 0)
    assert np.all(vals <= vals[0] + 1e-15)
    assert vals[0] <= 1


@pytest.mark.parametrize("d", [1, 2, 3])
def test_cr_value_at_origin(d):
    k = optimal_CR(d, 1.3, 0.8 * constant_M(d, 1.3))
    assert abs(k.eval(0.0) - 1.3) <= 1e-7


@pytest.mark.parametrize("d", [1, 2, 3])
def test_cr_profile_norm(d):
    R = constant_M(d, 1.0)
    k = optimal_CR(d, 1.0, R)
    u = k.meta["u"]
    assert integrate_radial(lambda r: u(r) ** 2, d, R / 2) == pytest.approx(1.0, rel=1e-10)
    assert abs(u(np.array([R / 2 * (1 - 1e-12)]))[0]) < 1e-9


def test_cr_matches_real_space_convolution_d1():
    R = 1.0
    k = optimal_CR(1, 1.0, R)
    u = k.meta["u"]
    for r in (0.0, 0.13, 0.5, 0.77, 0.99):
        assert k.eval(r) == pytest.approx(real_space_selfconv_1d(u, R, r), abs=1e-9)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_cr_local_repulsiveness(d):
    R = constant_M(d, 1.0) / 2
    j = bessel_first_zero((d - 2) / 2)
    assert local_repulsiveness(optimal_CR(d, 1.0, R)) == pytest.approx(8 * j * j / R**2, rel=1e-8)


def test_cr_local_d1_unit_range():
    assert local_repulsiveness(optimal_CR(1, 1.0, 1.0)) == pytest.approx(2 * math.pi**2, rel=1e-9)


@pytest.mark.parametrize("t", [0.0, 0.4, 1.1, 2.5])
def test_cr_fourier_matches_hankel(t):
    k = optimal_CR(2, 1.0, 1.0)
    assert k.fourier(t) == pytest.approx(hankel_fourier(k.eval, 2, t, support=1.0, scale=k.scale),
                                         abs=1e-7)


# ---------------------------------------------------------------- u family

def test_family_u_norm_and_continuity():
    prof = family_u(CompactParams(2, 1.0, 1.0, 0.1))
    assert prof.beta > 0
    norm = integrate_radial(lambda r: prof.eval_u(r) ** 2, 2, 0.5,
                            breakpoints=np.linspace(0, 0.5, 41))
    assert norm == pytest.approx(1.0, rel=1e-8)
    assert abs(prof.eval_u(0.5)) < 1e-12
    assert prof.eval_u(0.6) == 0.0


@pytest.mark.parametrize("d,R,alpha", [(2, 1.0, 0.1), (1, 1.0, 0.3), (3, 1.4, 0.05), (2, 2.0, 0.4)])
@pytest.mark.parametrize("t", [0.0, 0.5, 1.0, 3.0])
def test_fourier_u_matches_hankel(d, R, alpha, t):
    prof = family_u(CompactParams(d, 1.0, R, alpha))
    ref = hankel_fourier(prof.eval_u, d, t, support=R / 2, scale=min(alpha, R / 16))
    assert prof.fourier_u(t) == pytest.approx(ref, abs=1e-6)


def test_fourier_u_removable_singularity():
    p = CompactParams(2, 1.0, 1.0, 0.1)
    prof = family_u(p)
    x0 = 1 / (2 * math.pi * p.alpha)
    side = prof.fourier_u(np.array([x0 * (1 - 1e-4), x0, x0 * (1 + 1e-4)]))
    assert np.all(np.isfinite(side))
    assert abs(side[1] - 0.5 * (side[0] + side[2])) < 1e-5
    ref = hankel_fourier(prof.eval_u, 2, x0, support=0.5, scale=0.03)
    assert side[1] == pytest.approx(ref, abs=1e-6)


def test_zero_collision():
    j0 = bessel_first_zero(0.0)
    with pytest.raises(ZeroCollisionError):
        CompactParams(2, 1.0, 1.0, 1.0 / (2 * j0))
    CompactParams(2, 1.0, 1.0, 1.0 / (2 * j0) * (1 + 1e-6))


def test_compact_params_validation():
    with pytest.raises(SpecError):
        CompactParams(0, 1.0, 1.0, 0.1)
    with pytest.raises(SpecError):
        CompactParams(2, 1.0, -1.0, 0.1)


def test_compact_u_kernel_is_square_of_fourier_u():
    k = compact_u_kernel(2, 1.0, 1.0, 0.15)
    prof = k.meta["profile"]
    ts = np.linspace(0, 40, 400)
    assert np.array_equal(k.fourier(ts), prof.fourier_u(ts) ** 2)
    assert np.all(k.fourier(ts) >= 0)
    assert abs(k.eval(0.0) - 1.0) <= 1e-7


@pytest.mark.parametrize("alpha", [0.05, 0.2, 0.6])
def test_compact_u_matches_real_space_convolution_d1(alpha):
    R = 1.0
    k = compact_u_kernel(1, 1.0, R, alpha)
    prof = k.meta["profile"]
    for r in (0.0, 0.21, 0.5, 0.9):
        assert k.eval(r) == pytest.approx(real_space_selfconv_1d(prof.eval_u, R, r), abs=1e-8)


# ---------------------------------------------------------------- alpha search and optimum

def test_alpha_search_inf_below_M():
    assert alpha_max_search(1, 1.0, 1.0) == math.inf


def test_alpha_search_at_2M():
    R = 2 * constant_M(1, 1.0)
    a = alpha_max_search(1, 1.0, R)
    assert a == pytest.approx(ALPHA_AT_2M_D1, abs=1e-9)
    prof = family_u(CompactParams(1, 1.0, R, a))
    _, sup = maximize_1d(lambda t: np.abs(prof.fourier_u(t)), 0.0, 40 / R, grid_n=20480)
    assert 1 - 1e-9 <= sup <= 1 + 1e-6
    # slightly larger alpha is infeasible
    bigger = family_u(CompactParams(1, 1.0, R, a * (1 + 1e-6)))
    _, sup2 = maximize_1d(lambda t: np.abs(bigger.fourier_u(t)), 0.0, 40 / R, grid_n=20480)
    assert sup2 > 1


def test_alpha_search_at_M_approaches_cr():
    # at R = M the search runs into the excluded point R/(2 alpha) = j_{-1/2},
    # i.e. alpha = M/pi, where u degenerates to the truncated Bessel profile
    M = constant_M(1, 1.0)
    a = alpha_max_search(1, 1.0, M)
    assert a < M / math.pi
    assert a == pytest.approx(M / math.pi, rel=1e-7)
    c2 = compact_u_kernel(1, 1.0, M, a)
    cr = optimal_CR(1, 1.0, M)
    rs = np.linspace(0, 3, 301)
    assert np.max(np.abs(pcf(c2, rs) - pcf(cr, rs))) <= 0.02


def test_most_locally_repulsive_closed_branch():
    M = constant_M(2, 1.0)
    k = most_locally_repulsive(2, 1.0, M / 2)
    ref = optimal_CR(2, 1.0, M / 2)
    assert k.meta["branch"] == "closed_form"
    assert k.spec == KernelSpec(COMPACT_OPTIMAL, d=2, rho=1.0, R=M / 2)
    ts = np.linspace(0, 30, 50)
    assert np.array_equal(k.fourier(ts), ref.fourier(ts))


@pytest.fixture(scope="module")
def heuristic_2m():
    return most_locally_repulsive(1, 1.0, 2 * constant_M(1, 1.0))


def test_most_locally_repulsive_heuristic(heuristic_2m):
    k = heuristic_2m
    assert k.meta["heuristic"] is True and k.meta["branch"] == "heuristic"
    assert k.meta["alpha"] == pytest.approx(ALPHA_AT_2M_D1, abs=1e-9)
    assert validate(k).valid


def test_heuristic_pcf_shape(heuristic_2m):
    # g(0) = 0, g <= 1 everywhere and g < 1 up to the first zero of C; beyond
    # it C changes sign, so g touches 1 at isolated radii (as C_B's pcf does)
    k = heuristic_2m
    R = 2 * constant_M(1, 1.0)
    rs = np.linspace(0, R, 2001)
    g = pcf(k, rs)
    assert abs(g[0]) < 1e-7
    assert np.all(g <= 1 + 1e-12)
    c = k.eval(rs)
    first_zero = rs[np.argmax(c <= 0)]
    inside = rs < first_zero - 1e-3
    assert np.all(g[inside][1:] < 1)
    assert np.all(pcf(k, np.linspace(R, 3 * R, 50)) == 1.0)


def test_local_improves_with_range(heuristic_2m):
    at_m = local_repulsiveness(optimal_CR(1, 1.0, constant_M(1, 1.0)))
    assert local_repulsiveness(heuristic_2m) < at_m


def test_cr_beats_family_members_d1():
    best = local_repulsiveness(optimal_CR(1, 1.0, 1.0))
    for alpha in (0.02, 0.1, 0.25, 0.5, 2.0):
        assert best <= local_repulsiveness(compact_u_kernel(1, 1.0, 1.0, alpha)) + 1e-6


# ---------------------------------------------------------------- smoothed truncation

def test_bump_selfconv_d1_real_space():
    grid, vals = cp.bump_selfconv_table(1)
    for i in (0, 307, 1023, 1740):
        s = grid[i]
        lo, hi = max(-1.0, s - 1.0), min(1.0, s + 1.0)
        ref = integrate.quad(lambda x: cp.bump(abs(x)) * cp.bump(abs(s - x)), lo, hi,
                             epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        assert vals[i] == pytest.approx(ref, abs=1e-10)


def test_bump_selfconv_d2_real_space():
    grid, vals = cp.bump_selfconv_table(2)
    for i in (0, 819):
        s = grid[i]
        f = lambda th, r: r * float(cp.bump(r)) * float(cp.bump(math.hypot(r * math.cos(th) - s,
                                                                              r * math.sin(th))))
        ref = integrate.dblquad(f, 0, 1, 0, 2 * math.pi, epsabs=1e-12, epsrel=1e-10)[0]
        assert vals[i] == pytest.approx(ref, abs=1e-9)


@pytest.fixture(scope="module")
def truncated():
    base = make_kernel(KernelSpec(BESSEL, d=2, rho=1.0, sigma=1.0, alpha=0.35))
    return smoothed_truncation(base, 3.0)


def test_smoothed_basic(truncated):
    assert truncated.eval(0.0) == pytest.approx(1.0, abs=1e-12)
    assert np.all(truncated.eval(np.array([3.0, 3.5, 10.0])) == 0.0)
    rs = np.linspace(0, 3, 301)
    assert np.all(np.abs(np.diff(truncated.eval(rs))) < 0.05)


def test_smoothed_condition_k(truncated):
    ts = np.linspace(0, truncated.fourier_cutoff, 12)
    ref = np.array([hankel_fourier(truncated.eval, 2, t, support=3.0, scale=truncated.scale)
                    for t in ts])
    assert np.all(ref >= -1e-8) and np.all(ref <= 1 + 1e-8)
    assert np.allclose(truncated.fourier(ts), ref, atol=1e-6)
    assert validate(truncated).valid


def test_smoothed_converges_to_cb_d1():
    cb = make_kernel(KernelSpec(MOST_REPULSIVE, d=1, rho=1.0))
    rs = np.linspace(0, 2, 1001)
    dist = [np.max(np.abs(smoothed_truncation(cb, r).eval(rs) - cb.eval(rs))) for r in (10, 20, 50)]
    assert dist[0] > dist[1] > dist[2]
    assert dist[2] < 0.02


def test_smoothed_global_below_base():
    base = make_kernel(KernelSpec(MOST_REPULSIVE, d=1, rho=1.0))
    k = smoothed_truncation(base, 6.0)
    assert global_repulsiveness(k) <= global_repulsiveness(base) + 1e-9
