"""SVG line charts of scores, reconstructions and trust weights."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_scores", "plot_reconstruction", "plot_weights", "export_plots"]


def _shade_labels(ax, t, labels) -> None:
    if labels is None:
        return
    y = np.asarray(labels).astype(bool)
    edges = np.flatnonzero(np.diff(np.r_[0, y.astype(int), 0]))
    for lo, hi in zip(edges[::2], edges[1::2]):
        ax.axvspan(t[lo], t[hi - 1], color="tab:red", alpha=0.2, lw=0)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_scores(t, scores, path, threshold: float | None = None, labels=None) -> Path:
    fig, ax = plt.subplots(figsize=(10, 3))
    _shade_labels(ax, t, labels)
    ax.plot(t, scores, lw=0.8, label="score")
    if threshold is not None:
        ax.axhline(threshold, color="k", ls="--", lw=0.8, label=f"threshold {threshold:.3g}")
    ax.set_xlabel("time (min)")
    ax.set_ylabel("score (min)")
    ax.legend(loc="upper right")
    return _save(fig, path)


def plot_reconstruction(t, observed_mean, recon_mean, path, labels=None) -> Path:
    """Expected duration under the observed and reconstructed distributions."""
    fig, ax = plt.subplots(figsize=(10, 3))
    _shade_labels(ax, t, labels)
    ax.plot(t, observed_mean, lw=0.8, label="observed")
    ax.plot(t, recon_mean, lw=0.8, label="reconstructed")
    ax.set_xlabel("time (min)")
    ax.set_ylabel("expected duration (min)")
    ax.legend(loc="upper right")
    return _save(fig, path)


def plot_weights(t, trust, path, layer_means=None, labels=None) -> Path:
    """Trust weights, and optionally each layer's expected-duration output."""
    n = 1 if layer_means is None else 2
    fig, axes = plt.subplots(n, 1, figsize=(10, 3 * n), sharex=True, squeeze=False)
    ax = axes[0, 0]
    _shade_labels(ax, t, labels)
    ax.plot(t, trust, lw=0.8)
    ax.axhline(1.0, color="k", ls=":", lw=0.6)
    ax.set_ylabel("trust weight (x W)")
    if layer_means is not None:
        ax = axes[1, 0]
        for l, m in enumerate(layer_means):
            ax.plot(t, m, lw=0.8, label=f"layer {l}")
        ax.set_ylabel("layer output")
        ax.legend(loc="upper right")
    axes[-1, 0].set_xlabel("time (min)")
    return _save(fig, path)


def export_plots(out_dir, t, scores, observed_mean, recon_mean, trust, threshold=None,
                 labels=None, layer_means=None) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return {
        "scores": plot_scores(t, scores, out / "scores.svg", threshold, labels),
        "reconstruction": plot_reconstruction(t, observed_mean, recon_mean, out / "reconstruction.svg", labels),
        "weights": plot_weights(t, trust, out / "weights.svg", layer_means, labels),
    }
