"""Marginal posterior densities from loss-potential samples.

Each sample ``(lambda_hat, J)`` gets the weight ``exp(-J)`` (uniform prior).
A marginal is the weighted histogram of one parameter on a uniform grid,
smoothed with a Gaussian kernel and normalised to unit integral.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid


@dataclass
class MarginalDensity:
    name: str
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self):
        return float(trapezoid(self.density, self.grid))


@dataclass
class Peak:
    location: float
    height: float
    width: float


@dataclass
class PeakStats:
    peaks: list = field(default_factory=list)

    @property
    def count(self):
        return len(self.peaks)

    def widths(self):
        return np.array([p.width for p in self.peaks])

    def to_dict(self):
        return {
            "count": self.count,
            "peaks": [{"location": p.location, "height": p.height, "width": p.width} for p in self.peaks],
            "mean_width": float(np.mean(self.widths())) if self.peaks else None,
            "std_width": float(np.std(self.widths())) if self.peaks else None,
        }


def loss_weights(J, shift=True):
    """``exp(-J)``, optionally shifted by ``min J`` so the best sample has
    weight one.  The shift cancels on normalisation."""
    J = np.asarray(J, dtype=float)
    ref = np.min(J) if shift else 0.0
    w = np.exp(-(J - ref))
    if not np.any(w > 0):
        raise ValueError("all exp(-J) weights underflow; use shift=True to rescale by min J")
    return w


def _weighted_quantile(x, w, q):
    order = np.argsort(x)
    cw = np.cumsum(w[order])
    cw /= cw[-1]
    return np.interp(q, cw, x[order])


def silverman_bandwidth(x, w):
    w = w / w.sum()
    n_eff = 1.0 / np.sum(w * w)
    mu = np.sum(w * x)
    sd = np.sqrt(np.sum(w * (x - mu) ** 2))
    iqr = _weighted_quantile(x, w, 0.75) - _weighted_quantile(x, w, 0.25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * n_eff ** (-0.2)


def _linear_binning(x, w, grid):
    h = np.zeros(grid.size)
    dx = grid[1] - grid[0]
    pos = np.clip((x - grid[0]) / dx, 0.0, grid.size - 1.0)
    lo = np.minimum(np.floor(pos).astype(int), grid.size - 2)
    frac = pos - lo
    np.add.at(h, lo, w * (1.0 - frac))
    np.add.at(h, lo + 1, w * frac)
    return h


def marginal(estimates, losses, index, n_bins=100, bandwidth=None, name=None, shift=True):
    """Smoothed exp(-J)-weighted marginal of parameter ``index``.

    ``estimates`` is an ``(n, p)`` array (or 1-D for a single parameter).
    """
    est = np.asarray(estimates, dtype=float)
    x = est if est.ndim == 1 else est[:, index]
    J = np.asarray(losses, dtype=float)
    ok = np.isfinite(x) & np.isfinite(J)
    x, J = x[ok], J[ok]
    if x.size < 2:
        raise ValueError("need at least two samples with finite loss")
    if n_bins < 3:
        raise ValueError("n_bins must be at least 3")
    w = loss_weights(J, shift=shift)
    lo, hi = x.min(), x.max()
    if hi <= lo:
        pad = 1e-3 * max(abs(lo), 1.0)
        lo, hi = lo - pad, hi + pad
    grid = np.linspace(lo, hi, n_bins)
    dx = grid[1] - grid[0]
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x, w)
    bandwidth = max(float(bandwidth), 1e-12)

    hist = _linear_binning(x, w, grid)
    K = np.exp(-0.5 * ((grid[:, None] - grid[None, :]) / bandwidth) ** 2)
    # column normalisation: each bin hands out exactly its own mass
    K /= K.sum(axis=0, keepdims=True)
    dens = K @ hist
    dens /= trapezoid(dens, dx=dx)
    return MarginalDensity(name=name if name is not None else str(index), grid=grid, density=dens, bandwidth=bandwidth)


def marginals(samples, n_bins=100, bandwidth=None):
    """One marginal per learned parameter of a SampleSet."""
    return {
        name: marginal(samples.estimates, samples.loss, i, n_bins=n_bins, bandwidth=bandwidth, name=name)
        for i, name in enumerate(samples.names)
    }


def mle(md):
    # argmax returns the first maximum, i.e. the lowest grid value on ties
    return float(md.grid[np.argmax(md.density)])


def expectation_std(md):
    g, d = md.grid, md.density
    norm = trapezoid(d, g)
    mean = trapezoid(g * d, g) / norm
    var = trapezoid((g - mean) ** 2 * d, g) / norm
    return float(mean), float(np.sqrt(max(var, 0.0)))


def _half_crossing(g, d, k, half, step):
    j = k
    while 0 <= j + step < len(d) and d[j + step] > half:
        j += step
    if not 0 <= j + step < len(d):
        return g[j]
    # linear interpolation between j (above half) and j+step (at/below half)
    d0, d1 = d[j], d[j + step]
    t = (d0 - half) / (d0 - d1) if d0 != d1 else 0.0
    return g[j] + t * (g[j + step] - g[j])


def peak_stats(md, prominence_threshold=0.05):
    """Local maxima above ``prominence_threshold * max(density)`` and their
    full widths at half height."""
    g, d = md.grid, md.density
    top = d.max()
    if top <= 0:
        return PeakStats()
    thr = prominence_threshold * top
    padded = np.concatenate([[-np.inf], d, [-np.inf]])
    peaks = []
    k = 1
    while k <= len(d):
        # treat flat tops as one maximum located at their left end
        r = k
        while r < len(d) and padded[r + 1] == padded[k]:
            r += 1
        if padded[k] > padded[k - 1] and padded[k] > padded[r + 1] and padded[k] >= thr:
            i = k - 1
            half = 0.5 * d[i]
            left = _half_crossing(g, d, i, half, -1)
            right = _half_crossing(g, d, r - 1, half, +1)
            width = right - left
            if width <= 0:
                width = g[1] - g[0]
            peaks.append(Peak(location=float(g[i]), height=float(d[i]), width=float(width)))
        k = r + 1
    return PeakStats(peaks)
