"""Figure rendering for the CLI report paths.

Every report-producing subcommand writes these PNGs next to its delimited
output. Figures are diagnostics, not precision artifacts; the CSV/JSON files
remain the authoritative outputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(Path(path), dpi=150)
    plt.close(fig)


def plot_sphere_blocks(blocks, color_values, path) -> None:
    """Scatter each block on the unit sphere, colored by the latent value."""
    fig = plt.figure(figsize=(4.5 * len(blocks), 4.5))
    for k, blk in enumerate(blocks):
        ax = fig.add_subplot(1, len(blocks), k + 1, projection="3d")
        u, v = np.meshgrid(np.linspace(0, 2 * np.pi, 30),
                           np.linspace(0, np.pi, 15))
        ax.plot_wireframe(np.cos(u) * np.sin(v), np.sin(u) * np.sin(v),
                          np.cos(v), color="lightgray", linewidth=0.3)
        sc = ax.scatter(blk[:, 0], blk[:, 1], blk[:, 2], c=color_values,
                        cmap="rainbow", s=18)
        ax.set_title(f"block {k + 1}")
        ax.set_box_aspect((1, 1, 1))
    fig.colorbar(sc, ax=fig.axes, shrink=0.6, label="latent angle")
    fig.savefig(Path(path), dpi=150)
    plt.close(fig)


def plot_aligned_shapes(preshapes, mean, path) -> None:
    """Overlay of aligned 2-D or 3-D (projected) shapes with their mean."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for p in preshapes:
        mat = p.matrix()
        ax.plot(mat[:, 0], mat[:, 1], "o", color="steelblue", alpha=0.3,
                markersize=3)
    mmat = mean.matrix()
    ax.plot(mmat[:, 0], mmat[:, 1], "k+", markersize=10, label="mean")
    ax.set_aspect("equal")
    ax.legend()
    ax.set_title("aligned pre-shapes")
    _save(fig, path)


def plot_scores(scores, path, title="scores") -> None:
    """First two score rows against each other (or a strip plot for one)."""
    scores = np.atleast_2d(scores)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    if scores.shape[0] >= 2:
        ax.scatter(scores[0], scores[1], s=16, c=np.arange(scores.shape[1]),
                   cmap="rainbow")
        ax.set_xlabel("score 1")
        ax.set_ylabel("score 2")
    else:
        ax.plot(scores[0], np.zeros_like(scores[0]), "o", alpha=0.5)
        ax.set_xlabel("score 1")
        ax.set_yticks([])
    ax.set_title(title)
    _save(fig, path)


def plot_component_heatmaps(decomposition, path, block_id="block") -> None:
    """Input-style heat maps of joint, individual and residual matrices."""
    mats = [("joint", decomposition.joint),
            ("individual", decomposition.individual),
            ("residual", decomposition.residual)]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    vmax = max(np.max(np.abs(m)) for _, m in mats) or 1.0
    for ax, (name, m) in zip(axes, mats):
        im = ax.imshow(m, aspect="auto", cmap="RdBu_r", vmin=-vmax, vmax=vmax)
        ax.set_title(f"{block_id}: {name}")
        ax.set_xlabel("cases")
        ax.set_ylabel("features")
    fig.colorbar(im, ax=axes, shrink=0.8)
    fig.savefig(Path(path), dpi=150)
    plt.close(fig)


def plot_permutation_density(perms, observed, path) -> None:
    """Permutation statistics with the observed value marked."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.hist(perms, bins=40, density=True, color="seagreen", alpha=0.6,
            label="permutations")
    ax.axvline(observed, color="brown", linestyle="--", label="observed")
    ax.set_xlabel("mean difference")
    ax.set_ylabel("density")
    ax.legend()
    _save(fig, path)


def plot_score_histogram(values, path, xlabel="ROC-AUC") -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.hist(values, bins=30, color="seagreen", alpha=0.7)
    ax.axvline(float(np.mean(values)), color="brown", linestyle="--",
               label=f"mean {np.mean(values):.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("rounds")
    ax.legend()
    _save(fig, path)


def plot_distance_map(shape_points, distances, path, block_id="block") -> None:
    """Per-landmark distances over the reference shape (heat-map style)."""
    pts = np.asarray(shape_points, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    sc = ax.scatter(pts[:, 0], pts[:, 1], c=distances, cmap="jet", s=80,
                    edgecolor="k", linewidth=0.4)
    fig.colorbar(sc, ax=ax, label="distance")
    ax.set_aspect("equal")
    ax.set_title(f"{block_id}: group difference per landmark")
    _save(fig, path)
