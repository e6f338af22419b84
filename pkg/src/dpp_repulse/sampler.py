"""Point-pattern generators on rectangular windows.

The DPP sampler approximates the kernel on the window W by the Fourier basis
phi_k(x) = exp(2 i pi k.(x - lower)/L) / sqrt(|W|), k in Z^d, with eigenvalues
given by F(C) averaged over the dual-lattice cell of k (so that the
eigenvalues sum to rho |W| exactly up to truncation).  An active set is drawn
by independent Bernoulli(lambda_k) trials and the resulting projection DPP is
sampled point by point by rejection from the uniform proposal.

Randomness: numpy's Philox counter-based generator, keyed by (seed,
replicate) through ``SeedSequence(seed, spawn_key=(replicate,))``.
"""

from dataclasses import dataclass, field
import json
import math
import threading
import warnings

import numpy as np
from scipy.spatial import cKDTree

from .specfun import ball_volume
from .kernels import POISSON

__all__ = [
    "Window",
    "PointPattern",
    "make_rng",
    "dpp_eigenvalues",
    "sample_dpp",
    "sample_poisson",
    "sample_matern2",
    "solve_matern_proposal",
    "TruncationWarning",
    "SamplingError",
]


class TruncationWarning(RuntimeWarning):
    pass


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Window:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ValueError("window bounds must have the same positive length")
        if any(not (h > l) for l, h in zip(lo, hi)):
            raise ValueError("window must satisfy upper > lower on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, lo, hi, d):
        return cls((lo,) * d, (hi,) * d)

    @classmethod
    def parse(cls, text):
        """Parse "lo1,hi1;lo2,hi2;..."."""
        lo, hi = [], []
        for part in text.split(";"):
            a, b = part.split(",")
            lo.append(float(a))
            hi.append(float(b))
        return cls(tuple(lo), tuple(hi))

    @property
    def d(self):
        return len(self.lower)

    @property
    def lengths(self):
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    def contains(self, pts, strict=True):
        pts = np.atleast_2d(pts)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        if strict:
            return np.all((pts > lo) & (pts < hi), axis=1)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def to_dict(self):
        return {"lower": list(self.lower), "upper": list(self.upper)}


@dataclass
class PointPattern:
    points: np.ndarray
    window: Window
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.window.d)
        self.points = pts

    @property
    def n(self):
        return self.points.shape[0]

    def write_csv(self, path):
        d = self.window.d
        with open(path, "w", newline="") as fh:
            fh.write(",".join(f"x{i + 1}" for i in range(d)) + "\n")
            for p in self.points:
                fh.write(",".join(format(float(v), ".17g") for v in p) + "\n")

    def sidecar(self):
        out = {"window": self.window.to_dict()}
        out.update(self.provenance)
        return out

    def write_sidecar(self, path):
        with open(path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read_csv(cls, path, window, provenance=None):
        pts = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(pts, window, dict(provenance or {}))


def make_rng(seed, replicate=0):
    """Philox generator for stream ``replicate`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.Philox(ss))


def _cell_rule(d):
    n = 12 if d <= 2 else 6
    x, w = np.polynomial.legendre.leggauss(n)
    # nodes on [-1/2, 1/2], weights summing to 1
    return 0.5 * x, 0.5 * w


def _fourier_radial(kernel):
    """F(C) as a fast radial callable (tabulated when it is not closed form)."""
    if kernel.meta.get("tabulated_fourier") is not None:
        return kernel.meta["tabulated_fourier"]
    return kernel.fourier


def dpp_eigenvalues(kernel, window, K):
    """Lattice frequencies k in [-K_i, K_i] and their cell-averaged eigenvalues.

    lambda_k = |W| int_{cell(k)} F(C)(t) dt, with cell(k) = prod
    [(k_i - 1/2)/L_i, (k_i + 1/2)/L_i], evaluated by a tensor Gauss-Legendre
    rule in each cell.
    """
    d = window.d
    if kernel.d != d:
        raise ValueError("kernel and window dimensions differ")
    K = np.broadcast_to(np.asarray(K, dtype=int), (d,))
    L = window.lengths
    axes = [np.arange(-k, k + 1) for k in K]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    x, w = _cell_rule(d)
    F = _fourier_radial(kernel)
    lam = _cell_average(F, grid, L, x, w)
    ts = kernel.fourier_support_radius
    if math.isfinite(ts):
        # cells cut by the edge of the support: F may jump there, so use a
        # fine midpoint grid instead of the Gauss rule
        half = 0.5 / L
        lo_t = np.maximum(np.abs(grid) / L - half, 0.0)
        hi_t = np.abs(grid) / L + half
        near = np.sqrt(np.sum(lo_t**2, axis=1))
        far = np.sqrt(np.sum(hi_t**2, axis=1))
        edge = (near <= ts) & (far >= ts)
        inside = far < ts
        if np.any(edge):
            n_fine = {1: 4096, 2: 256, 3: 48}.get(d, 16)
            xf = (np.arange(n_fine) + 0.5) / n_fine - 0.5
            wf = np.full(n_fine, 1.0 / n_fine)
            lam[edge] = _cell_average(F, grid[edge], L, xf, wf)
        lam[~(edge | inside)] = 0.0
    return grid, lam


def _cell_average(F, cells, L, x, w):
    d = cells.shape[1]
    sub = np.stack(np.meshgrid(*([x] * d), indexing="ij"), axis=-1).reshape(-1, d)
    sw = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), axis=-1).reshape(-1, d), axis=1)
    out = np.empty(cells.shape[0])
    chunk = max(1, 2_000_000 // sub.shape[0])
    for s in range(0, cells.shape[0], chunk):
        g = cells[s:s + chunk]
        t = (g[:, None, :] + sub[None, :, :]) / L
        out[s:s + chunk] = np.asarray(F(np.sqrt(np.sum(t * t, axis=-1)))) @ sw
    return out


def _default_K(kernel, window, coverage=0.999, k_max=4096):
    L = window.lengths
    ts = kernel.fourier_support_radius
    if math.isfinite(ts):
        return np.ceil(ts * L + 0.5).astype(int)
    target = coverage * kernel.rho * window.volume
    t = max(kernel.fourier_cutoff, 1.0 / np.min(L)) if math.isfinite(kernel.fourier_cutoff) else 1.0
    K = np.ceil(t * L * 0.25 + 0.5).astype(int)
    while True:
        _, lam = dpp_eigenvalues(kernel, window, K)
        if lam.sum() >= target or np.max(K) >= k_max:
            return K
        K = np.ceil(K * 1.5).astype(int) + 1


_SPECTRUM_LOCK = threading.Lock()


def _spectrum(kernel, window, K):
    """Frequencies, clipped eigenvalues and K; cached on the kernel per window."""
    key = (window.lower, window.upper, None if K is None else tuple(np.broadcast_to(K, (window.d,))))
    cache = kernel.meta.setdefault("_spectrum_cache", {})
    with _SPECTRUM_LOCK:
        if key in cache:
            return cache[key]
        if K is None:
            K = _default_K(kernel, window)
        K = np.broadcast_to(np.asarray(K, dtype=int), (window.d,)).copy()
        if np.any(K < 1):
            raise ValueError("truncation K must be >= 1")
        freqs, lam = dpp_eigenvalues(kernel, window, K)
        clip = max(float(np.max(lam - 1.0, initial=0.0)), float(np.max(-lam, initial=0.0)))
        if clip > 1e-9:
            raise SamplingError(f"eigenvalues outside [0, 1] by {clip}: kernel invalid here")
        lam = np.clip(lam, 0.0, 1.0)
        cache[key] = (freqs, lam, K)
        return cache[key]


def sample_dpp(kernel, window, seed, K=None, replicate=0, max_rejections=1_000_000):
    """One realization of the spectrally approximated DPP on ``window``.

    Returns
    -------
    PointPattern
        Provenance holds the model tag, seed, replicate, truncation K and
        the eigenvalue sum.
    """
    if kernel.spec.family == POISSON:
        raise ValueError("the degenerate Poisson kernel has no spectral sampler; use sample_poisson")
    freqs, lam, K = _spectrum(kernel, window, K)
    total = float(lam.sum())
    vol = window.volume
    if total < 0.99 * kernel.rho * vol:
        warnings.warn(f"truncation K={K.tolist()} captures {total:.4g} of rho|W|="
                      f"{kernel.rho * vol:.4g}", TruncationWarning, stacklevel=2)
    rng = make_rng(seed, replicate)
    active = freqs[rng.random(lam.size) < lam]
    pts = _sample_projection(active, window, rng, max_rejections)
    prov = {"model": kernel.spec.to_dict(), "seed": int(seed), "replicate": int(replicate),
            "K": [int(k) for k in K], "sum_lambda": total, "n_active": int(active.shape[0]),
            "boundary": "periodic Fourier approximation on the window"}
    return PointPattern(pts, window, prov)


def _sample_projection(freqs, window, rng, max_rejections):
    n, d = freqs.shape
    lo = np.asarray(window.lower)
    L = window.lengths
    vol = window.volume
    omega = 2.0 * np.pi * freqs / L  # (n, d)
    basis = np.zeros((n, n), dtype=complex)  # orthonormal rows spanning chosen vectors
    pts = np.empty((n, d))
    full = n / vol
    for i in range(n):
        tries = 0
        # acceptance probability averages (n - i) / n
        batch = min(4096, int(math.ceil(2.0 * n / (n - i))) + 2)
        while True:
            x = lo + L * rng.random((batch, d))
            v = np.exp(1j * ((x - lo) @ omega.T)) / math.sqrt(vol)  # (batch, n)
            if i:
                coef = v @ basis[:i].conj().T  # (batch, i)
                resid = full - np.sum(np.abs(coef) ** 2, axis=1)
            else:
                resid = np.full(batch, full)
            acc = rng.random(batch) * full < resid
            hit = np.flatnonzero(acc)
            if hit.size:
                k = hit[0]
                break
            tries += batch
            if tries > max_rejections:
                raise SamplingError(f"point {i} of {n}: more than {max_rejections} rejections")
        xi, vi = x[k], v[k]
        if i:
            vi = vi - (basis[:i].conj() @ vi) @ basis[:i]
            # one re-orthogonalization pass keeps the basis orthonormal
            vi = vi - (basis[:i].conj() @ vi) @ basis[:i]
        basis[i] = vi / np.linalg.norm(vi)
        pts[i] = xi
    return pts


def sample_poisson(rho, window, seed, replicate=0):
    """Homogeneous Poisson process of intensity ``rho`` on ``window``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    rng = make_rng(seed, replicate)
    n = rng.poisson(rho * window.volume)
    lo = np.asarray(window.lower)
    pts = lo + window.lengths * rng.random((n, window.d))
    prov = {"model": {"family": "Poisson", "rho": rho, "d": window.d}, "seed": int(seed),
            "replicate": int(replicate), "K": None}
    return PointPattern(pts, window, prov)


def solve_matern_proposal(target_rho, hardcore_r, d):
    """Proposal intensity giving retained intensity ``target_rho`` in a type II Matern process."""
    v = ball_volume(d, hardcore_r)
    x = target_rho * v
    if not target_rho > 0:
        raise ValueError("target intensity must be positive")
    # the relative slack absorbs rounding in V_r at the supremum itself
    if x >= 1 - 1e-12:
        raise ValueError(f"target intensity {target_rho} is not reachable: rho V_r = {x} >= 1")
    return -math.log1p(-x) / v


def sample_matern2(proposal_intensity, hardcore_r, window, seed, replicate=0):
    """Type II Matern hardcore process.

    Proposals on the window dilated by ``hardcore_r`` carry uniform marks; a
    proposal survives iff it has the smallest mark among all proposals within
    ``hardcore_r``.
    """
    if not (proposal_intensity > 0 and hardcore_r > 0):
        raise ValueError("proposal intensity and hardcore radius must be positive")
    rng = make_rng(seed, replicate)
    d = window.d
    lo = np.asarray(window.lower) - hardcore_r
    L = window.lengths + 2 * hardcore_r
    n = rng.poisson(proposal_intensity * float(np.prod(L)))
    prop = lo + L * rng.random((n, d))
    marks = rng.random(n)
    keep = np.zeros(n, dtype=bool)
    if n:
        # a survivor is the smallest mark in its grid cell of side r/sqrt(d)
        # (cells lie inside an r-ball), which prunes candidates cheaply
        side = hardcore_r / math.sqrt(d)
        cells = np.floor((prop - lo) / side).astype(np.int64)
        dims = cells.max(axis=0) + 1
        cid = np.ravel_multi_index(cells.T, dims)
        order = np.lexsort((marks, cid))
        first = np.ones(n, dtype=bool)
        first[1:] = cid[order][1:] != cid[order][:-1]
        cand = order[first]
        # only proposals marked below some candidate can remove one
        low = np.flatnonzero(marks <= marks[cand].max())
        tree = cKDTree(prop[low])
        neigh = tree.query_ball_point(prop[cand], hardcore_r)
        for c, nb in zip(cand, neigh):
            nb = low[np.asarray(nb, dtype=np.int64)]
            nb = nb[nb != c]
            keep[c] = nb.size == 0 or marks[c] < marks[nb].min()
    pts = prop[keep]
    pts = pts[window.contains(pts)]
    prov = {"model": {"family": "MaternII", "proposal_intensity": proposal_intensity,
                      "hardcore_r": hardcore_r, "d": d}, "seed": int(seed),
            "replicate": int(replicate), "K": None}
    return PointPattern(pts, window, prov)
