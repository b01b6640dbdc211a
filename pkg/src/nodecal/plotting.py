"""Figure export (SVG) for densities, loss potentials, trajectories and
inequality heatmaps."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_density(path, md, peaks=None):
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(md.grid, md.density, lw=1.5)
    if peaks is not None:
        for p in peaks.peaks:
            ax.axvline(p.location, color="grey", lw=0.8, ls="--")
    ax.set_xlabel(md.name)
    ax.set_ylabel("density")
    return _save(fig, path)


def plot_loss_potential(path, samples, x, y):
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    order = np.argsort(-samples.loss)
    sc = ax.scatter(
        samples.column(x)[order], samples.column(y)[order],
        c=np.log10(np.maximum(samples.loss[order], 1e-300)), s=3, cmap="viridis",
    )
    fig.colorbar(sc, ax=ax, label="log10 J")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    return _save(fig, path)


def plot_trajectories(path, series, labels, mean=None, std=None):
    series = np.asarray(series)
    fig, ax = plt.subplots(figsize=(5, 3))
    t = np.arange(len(series))
    for k, name in enumerate(labels):
        line, = ax.plot(t, series[:, k], lw=1, label=name)
        if mean is not None:
            ax.plot(t, mean[:, k], lw=1, ls="--", color=line.get_color())
            if std is not None:
                ax.fill_between(t, mean[:, k] - std[:, k], mean[:, k] + std[:, k], color=line.get_color(), alpha=0.2)
    if len(labels) <= 5:
        ax.legend(frameon=False)
    ax.set_xlabel("t")
    return _save(fig, path)


def plot_heatmap(path, xs, ys, values, xlabel, ylabel, label):
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    mesh = ax.pcolormesh(xs, ys, values, shading="nearest", cmap="magma")
    fig.colorbar(mesh, ax=ax, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return _save(fig, path)


def plot_scaling(path, sizes, times):
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.loglog(sizes, times, "o-")
    ax.set_xlabel("N + M")
    ax.set_ylabel("seconds per epoch")
    return _save(fig, path)
