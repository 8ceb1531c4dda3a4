"""Report figures written next to the CLI's JSON output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# pinned so repeated runs write identical files
SAVE_KW = dict(dpi=100, metadata={"Software": None})


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **SAVE_KW)
    plt.close(fig)


def epipolar_figure(path, width, height, vertices, oracle_pixels=None, background=None, title=None):
    """Source panorama with the epipolar curve and oracle reprojections."""
    fig, ax = plt.subplots(figsize=(8, 4.4))
    if background is not None:
        ax.imshow(np.clip(background, 0, 1), extent=(0, width, height, 0), interpolation="nearest")
    if isinstance(vertices, list):
        for seg in vertices:
            ax.plot(seg[:, 0], seg[:, 1], color="tab:red", lw=1.2)
    else:
        ax.plot(vertices[:, 0], vertices[:, 1], color="tab:red", lw=1.2, label="epipolar curve")
    if oracle_pixels is not None and len(oracle_pixels):
        ax.scatter(oracle_pixels[:, 0], oracle_pixels[:, 1], s=14, color="tab:blue", zorder=3,
                   label="lifted samples")
    ax.set_xlim(0, width)
    ax.set_ylim(height, 0)
    ax.set_xlabel("x (px)")
    ax.set_ylabel("y (px)")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="lower right", fontsize=8)
    _finish(fig, path)


def change_ratio_figure(path, manifests):
    """Consecutive-frame change ratios per trajectory against the stage-2 threshold."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    tau = None
    for m in manifests:
        r = np.asarray(m["ratios"], dtype=float)
        ax.plot(np.arange(len(r)) + 0.5, r, marker="o", ms=3, label=m["scene"] or "trajectory")
        tau = m["tau_change"]
    if tau is not None:
        ax.axhline(tau, color="k", ls="--", lw=0.8)
    ax.set_xlabel("frame pair (k, k+1)")
    ax.set_ylabel("changed fraction")
    ax.set_ylim(0, 1)
    if len(manifests) > 1:
        ax.legend(fontsize=8)
    _finish(fig, path)


def attention_figure(path, results):
    """Per-view histograms of softmax weight entropy."""
    n = len(results)
    fig, axes = plt.subplots(1, n, figsize=(2.6 * n, 2.6), squeeze=False)
    for ax, (i, res) in zip(axes[0], enumerate(results)):
        w = res.weights.reshape(res.weights.shape[0], -1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = -np.sum(np.where(w > 0, w * np.log(w), 0.0), axis=1)
        ax.hist(ent, bins=30, color="tab:gray")
        ax.set_title(f"view {i} refs {res.refs}", fontsize=8)
        ax.set_xlabel("entropy (nats)", fontsize=8)
    _finish(fig, path)
