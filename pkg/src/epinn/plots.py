"""Static SVG figures: prediction bands, heatmaps, learning curves."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .problems import Dataset


def plot_1d_prediction(dataset: Dataset, mean, sigma_p, path, z: float = 1.96,
                       train_hi: float | None = None, noise_bands=None) -> Path:
    """Prediction curve with a +-z sigma_p band over the exact solution."""
    path = Path(path)
    x = dataset.test_x[:, 0]
    order = np.argsort(x)
    x, m, s, u = x[order], np.asarray(mean)[order], np.asarray(sigma_p)[order], dataset.test_u[order]

    fig, ax = plt.subplots(figsize=(7, 4.2))
    if noise_bands:
        for lo, hi in noise_bands:
            ax.axvspan(lo, hi, color="orange", alpha=0.15, lw=0)
    ax.fill_between(x, m - z * s, m + z * s, color="C0", alpha=0.25, label=f"±{z}·σ_p")
    ax.plot(x, u, "k--", lw=1.2, label="exact")
    ax.plot(x, m, "C0", lw=1.5, label="prediction")
    ax.plot(dataset.obs.x[:, 0], dataset.obs.u_noisy, ".", color="C3", ms=3, alpha=0.6, label="observations")
    if train_hi is not None:
        ax.axvline(train_hi, color="gray", ls=":", lw=1, label="training edge")
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_2d_heatmaps(dataset: Dataset, mean, sigma_p, out_dir, stem: str = "field") -> list[Path]:
    """Three SVGs over the test grid: prediction, |error|, sigma_p."""
    out_dir = Path(out_dir)
    n = dataset.test_x.shape[0]
    g = int(round(np.sqrt(n)))
    if g * g != n:
        raise ValueError(f"test grid of size {n} is not square")
    xs = dataset.test_x[:, 0].reshape(g, g)
    ys = dataset.test_x[:, 1].reshape(g, g)
    panels = (
        ("prediction", np.asarray(mean).reshape(g, g), "viridis"),
        ("error", np.abs(np.asarray(mean) - dataset.test_u).reshape(g, g), "magma"),
        ("sigma_p", np.asarray(sigma_p).reshape(g, g), "magma"),
    )
    paths = []
    for name, field, cmap in panels:
        fig, ax = plt.subplots(figsize=(4.6, 3.8))
        pc = ax.pcolormesh(xs, ys, field, cmap=cmap, shading="auto")
        fig.colorbar(pc, ax=ax)
        ax.set_title(name)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_aspect("equal")
        fig.tight_layout()
        p = out_dir / f"{stem}_{name}.svg"
        fig.savefig(p, format="svg")
        plt.close(fig)
        paths.append(p)
    return paths


def plot_learning_curve(curve: pd.DataFrame, path) -> Path:
    """Loss components and the coefficient-posterior trajectory."""
    path = Path(path)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for col in ("total", "data", "residual", "regularizer"):
        if col in curve.columns:
            ax1.plot(curve["epoch"], curve[col], lw=1.0, label=col)
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=8)
    ax2.plot(curve["epoch"], curve["kappa_mean"], "C0", lw=1.2, label="kappa mean")
    ax2.fill_between(
        curve["epoch"],
        curve["kappa_mean"] - curve["kappa_sigma"],
        curve["kappa_mean"] + curve["kappa_sigma"],
        color="C0",
        alpha=0.2,
        label="± sigma_kappa",
    )
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("kappa")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
