"""Overlay panels, probability heatmaps, and metric-curve plots."""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .pseudo_video import BiTemporalPair


def _chw_to_hwc(t):
    return np.transpose(t.detach().cpu().numpy(), (1, 2, 0))


def render_overlays(pair: BiTemporalPair, p2, mask, out_dir: str, threshold: float = 0.5):
    """Write a side-by-side panel image and a probability heatmap.

    Panels: image A, image B, coarse guidance mask, binarized prediction, and
    the ground truth when the pair has one. The heatmap filename carries the
    map's min/max. Returns the written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    p2_hw = p2.detach().cpu().numpy().reshape(p2.shape[-2], p2.shape[-1])
    mask_hw = mask.detach().cpu().numpy().reshape(mask.shape[-2], mask.shape[-1])
    pred_hw = (p2_hw >= threshold).astype(np.float32)

    panels = [
        (_chw_to_hwc(pair.i1), "A", None),
        (_chw_to_hwc(pair.i2), "B", None),
        (mask_hw, "coarse mask", "gray"),
        (pred_hw, "prediction", "gray"),
    ]
    if pair.label is not None:
        label_hw = pair.label.detach().cpu().numpy().reshape(pair.height, pair.width)
        panels.append((label_hw, "ground truth", "gray"))

    fig, axes = plt.subplots(1, len(panels), figsize=(3 * len(panels), 3.2))
    for ax, (img, title, cmap) in zip(axes, panels):
        if cmap:
            ax.imshow(img, cmap=cmap, vmin=0.0, vmax=1.0)
        else:
            ax.imshow(np.clip(img, 0.0, 1.0))
        ax.set_title(title, fontsize=9)
        ax.axis("off")
    panel_path = os.path.join(out_dir, f"{pair.id}_panels.png")
    fig.tight_layout()
    fig.savefig(panel_path, dpi=110)
    plt.close(fig)

    mn, mx = float(p2_hw.min()), float(p2_hw.max())
    heat_path = os.path.join(out_dir, f"{pair.id}_heatmap_min{mn:.4f}_max{mx:.4f}.png")
    fig, ax = plt.subplots(figsize=(4, 3.4))
    im = ax.imshow(p2_hw, cmap="inferno", vmin=0.0, vmax=1.0)
    fig.colorbar(im, ax=ax, fraction=0.046)
    ax.set_title(f"change probability ({pair.id})", fontsize=9)
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(heat_path, dpi=110)
    plt.close(fig)
    return [panel_path, heat_path]


def plot_metrics(history, out_path: str):
    """Loss and F1 curves per split from a run history."""
    splits = sorted({r.split for r in history.records})
    fig, (ax_loss, ax_f1) = plt.subplots(1, 2, figsize=(10, 3.6))
    for split in splits:
        recs = history.split_records(split)
        epochs = [r.epoch for r in recs]
        ax_loss.plot(epochs, [r.loss for r in recs], marker=".", label=split)
        ax_f1.plot(epochs, [r.f1 for r in recs], marker=".", label=split)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    ax_f1.set_xlabel("epoch")
    ax_f1.set_ylabel("F1")
    ax_f1.set_ylim(-0.02, 1.02)
    ax_f1.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path
