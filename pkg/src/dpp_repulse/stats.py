"""Empirical estimators for validating simulated patterns against theory."""

from dataclasses import dataclass
import csv
import math
import warnings

import numpy as np
from scipy.spatial import cKDTree

from .specfun import sphere_area
from .metrics import PcfCurve, format_float, pcf as theoretical_pcf
from .sampler import PointPattern, sample_dpp, sample_poisson

__all__ = [
    "PcfEstimate",
    "InsufficientPairsError",
    "MarginWarning",
    "empirical_intensity",
    "empirical_pcf",
    "smoothed_pcf",
    "epanechnikov",
    "count_variance_mc",
    "significant_range",
    "write_pcf_estimate_csv",
    "pcf_target",
    "validation_report",
]


class InsufficientPairsError(ValueError):
    pass


class MarginWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class PcfEstimate:
    curve: PcfCurve
    bandwidth: float
    n_patterns: int
    pointwise_se: np.ndarray


def empirical_intensity(patterns):
    """n / |W| for one pattern, or pooled total / (k |W|) for a list."""
    if not isinstance(patterns, (list, tuple)):
        patterns = [patterns]
    total = sum(p.n for p in patterns)
    vol = sum(p.window.volume for p in patterns)
    return total / vol


def epanechnikov(x, b):
    """Epanechnikov kernel with half-width b."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < b, 0.75 / b * (1.0 - (x / b) ** 2), 0.0)


def _pair_sums(pattern, radii, b):
    pts = pattern.points
    L = pattern.window.lengths
    out = np.zeros(radii.size)
    counts = np.zeros(radii.size, dtype=int)
    if pattern.n < 2:
        return out, counts
    tree = cKDTree(pts)
    pairs = tree.query_pairs(radii.max() + b, output_type="ndarray")
    if pairs.size == 0:
        return out, counts
    z = np.abs(pts[pairs[:, 0]] - pts[pairs[:, 1]])
    dist = np.sqrt(np.sum(z * z, axis=1))
    cov = np.prod(np.clip(L - z, 0.0, None), axis=1)
    for i, r in enumerate(radii):
        m = np.abs(r - dist) < b
        counts[i] = 2 * int(m.sum())
        # each unordered pair stands for the two ordered pairs
        out[i] = 2.0 * np.sum(epanechnikov(r - dist[m], b) / cov[m])
    return out, counts


def empirical_pcf(patterns, radii, bandwidth=None, min_pairs=5):
    """Kernel-smoothed, translation-corrected pcf estimate pooled over patterns.

    g_hat(r) = sum_patterns sum_{x != y} k_b(r - |x - y|) / gamma_W(x - y)
               / (s_d(r) sum_patterns n (n - 1) / |W|^2)

    Standard errors come from the spread of the per-pattern estimates.
    """
    if isinstance(patterns, PointPattern):
        patterns = [patterns]
    patterns = list(patterns)
    if not patterns:
        raise ValueError("need at least one pattern")
    win = patterns[0].window
    if any(p.window != win for p in patterns):
        raise ValueError("all patterns must share a window")
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    d = win.d
    vol = win.volume
    if bandwidth is None:
        rho = empirical_intensity(patterns)
        bandwidth = 0.1 / rho ** (1.0 / d) if rho > 0 else 0.1
    b = float(bandwidth)
    if b <= 0:
        raise ValueError("bandwidth must be positive")
    surf = sphere_area(d) * radii ** (d - 1)
    num = np.zeros(radii.size)
    den = 0.0
    counts = np.zeros(radii.size, dtype=int)
    per = []
    for p in patterns:
        s, c = _pair_sums(p, radii, b)
        r2 = p.n * (p.n - 1) / vol**2
        num += s
        den += r2
        counts += c
        if r2 > 0:
            per.append(s / (surf * r2))
    low = counts < min_pairs
    if np.any(low):
        raise InsufficientPairsError(f"fewer than {min_pairs} pairs at radii {radii[low].tolist()}")
    g = num / (surf * den)
    per = np.array(per)
    if per.shape[0] > 1:
        se = per.std(axis=0, ddof=1) / math.sqrt(per.shape[0])
    else:
        se = np.full(radii.size, np.nan)
    return PcfEstimate(PcfCurve(radii, g, "empirical"), b, len(patterns), se)


def smoothed_pcf(kernel, radii, bandwidth, n_nodes=64):
    """Theoretical pcf seen through the estimator's smoothing.

    E g_hat(r) = int g(s) k_b(r - s) (s / r)^{d-1} ds, which is what the
    kernel-smoothed estimator targets for small r (where g curves
    appreciably over one bandwidth).
    """
    radii = np.asarray(radii, dtype=float)
    d = kernel.d
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    out = np.empty(radii.size)
    for i, r in enumerate(radii):
        a, c = max(r - bandwidth, 0.0), r + bandwidth
        s = 0.5 * (a + c) + 0.5 * (c - a) * x
        ws = 0.5 * (c - a) * w
        out[i] = np.sum(ws * theoretical_pcf(kernel, s) * epanechnikov(r - s, bandwidth)
                        * (s / r) ** (d - 1))
    return out


def significant_range(kernel, level=1e-3):
    """Radius beyond which C(r)^2 / rho^2 stays below ``level``."""
    if math.isfinite(kernel.support_radius):
        return kernel.support_radius
    if not kernel.pointwise:
        return 0.0
    grid = np.linspace(0.0, 200.0 * kernel.scale, 20001)
    v = (kernel.eval(grid) / kernel.rho) ** 2
    above = np.flatnonzero(v > level)
    return float(grid[above[-1]]) if above.size else 0.0


def count_variance_mc(kernel, window, sub_window, replicates, seed, K=None, patterns=None):
    """Sample mean and variance of counts in ``sub_window`` over replicates.

    Returns a dict with ``mean``, ``variance`` and their standard errors; the
    variance s.e. uses the fourth central moment.  ``patterns`` may supply
    already simulated realizations.
    """
    lo_s, hi_s = np.asarray(sub_window.lower), np.asarray(sub_window.upper)
    lo_w, hi_w = np.asarray(window.lower), np.asarray(window.upper)
    if np.any(lo_s < lo_w) or np.any(hi_s > hi_w):
        raise ValueError("sub-window must lie inside the window")
    margin = float(min(np.min(lo_s - lo_w), np.min(hi_w - hi_s)))
    reach = significant_range(kernel)
    if margin < reach:
        warnings.warn(f"margin {margin:.3g} is below the correlation range {reach:.3g}",
                      MarginWarning, stacklevel=2)
    if patterns is None:
        if replicates < 2:
            raise ValueError("need at least two replicates")
        if kernel.pointwise:
            patterns = [sample_dpp(kernel, window, seed, K=K, replicate=i) for i in range(replicates)]
        else:
            patterns = [sample_poisson(kernel.rho, window, seed, replicate=i) for i in range(replicates)]
    counts = np.array([int(np.sum(sub_window.contains(p.points, strict=False))) for p in patterns],
                      dtype=float)
    n = counts.size
    mean = counts.mean()
    var = counts.var(ddof=1)
    m4 = np.mean((counts - mean) ** 4)
    var_se = math.sqrt(max(m4 - var**2 * (n - 3) / (n - 1), 0.0) / n)
    return {"mean": float(mean), "variance": float(var), "mean_se": math.sqrt(var / n),
            "variance_se": var_se, "replicates": n}


def write_pcf_estimate_csv(est, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "g_hat", "se"])
        for r, g, s in zip(est.curve.radii, est.curve.values, est.pointwise_se):
            w.writerow([format_float(r), format_float(g), format_float(s)])


def pcf_target(kernel, radii, bandwidth, window):
    """Expected value of ``empirical_pcf`` under the model.

    Two known effects of the estimator are folded into the closed-form g:
    kernel smoothing (see ``smoothed_pcf``) and the normalization by
    n (n - 1) / |W|^2, whose mean is rho^2 c_W with
    c_W = 1 + (Var N(W) - rho |W|) / (rho |W|)^2.
    """
    from .metrics import count_variance

    rho = kernel.rho
    nw = rho * window.volume
    c_w = 1.0 + (count_variance(kernel, window) - nw) / nw**2
    if not kernel.pointwise:
        return np.ones(np.size(radii)), c_w
    return smoothed_pcf(kernel, radii, bandwidth) / c_w, c_w


def validation_report(kernel, window, patterns, probe_radii=(0.1, 0.5, 1.0, 3.0), n_se=3.0,
                      sub_area=4.0):
    """Compare simulated patterns with the closed-form theory.

    Checks, each within ``n_se`` standard errors: pooled intensity against
    rho, the pcf estimate at ``probe_radii`` against its model expectation,
    and the mean and variance of counts in a centered sub-window of volume
    ``sub_area`` against rho |D| and the count-variance identity.
    """
    from .metrics import count_variance

    rho = kernel.rho
    d = window.d
    vol = window.volume
    counts = np.array([p.n for p in patterns], dtype=float)
    n_rep = counts.size
    lam = counts.sum() / (n_rep * vol)
    lam_se = counts.std(ddof=1) / (vol * math.sqrt(n_rep))
    out = {"replicates": n_rep, "rho": rho}
    out["intensity"] = {"estimate": lam, "se": lam_se, "theory": rho,
                        "pass": bool(abs(lam - rho) <= n_se * lam_se)}

    radii = np.asarray(probe_radii, dtype=float)
    est = empirical_pcf(patterns, radii)
    target, c_w = pcf_target(kernel, radii, est.bandwidth, window)
    closed = np.asarray(theoretical_pcf(kernel, radii), dtype=float) * np.ones(radii.size)
    pcf_rows = []
    for r, g, se, t, c in zip(radii, est.curve.values, est.pointwise_se, target, closed):
        pcf_rows.append({"r": r, "g_hat": g, "se": se, "target": t, "closed_form": c,
                         "z": (g - t) / se, "z_closed_form": (g - c) / se,
                         "pass": bool(abs(g - t) <= n_se * se)})
    out["pcf"] = {"bandwidth": est.bandwidth, "c_W": c_w, "probes": pcf_rows}

    side = sub_area ** (1.0 / d)
    centre = 0.5 * (np.asarray(window.lower) + np.asarray(window.upper))
    from .sampler import Window

    sub = Window(tuple(centre - side / 2), tuple(centre + side / 2))
    mc = count_variance_mc(kernel, window, sub, n_rep, 0, patterns=patterns)
    var_theory = count_variance(kernel, sub)
    out["count_variance"] = dict(mc, theory=var_theory, sub_window=sub.to_dict(),
                                 pass_variance=bool(abs(mc["variance"] - var_theory)
                                                    <= n_se * mc["variance_se"]),
                                 pass_mean=bool(abs(mc["mean"] - rho * sub.volume)
                                                <= n_se * mc["mean_se"]))
    out["all_pass"] = bool(out["intensity"]["pass"] and all(r["pass"] for r in pcf_rows)
                           and out["count_variance"]["pass_variance"]
                           and out["count_variance"]["pass_mean"])
    return out
