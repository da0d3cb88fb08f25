"""Figure emission: prediction panel plus signed kelvin difference map."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib import cm
from matplotlib.colors import Normalize


def diff_bound(diff: np.ndarray) -> float:
    """Symmetric color bound: max |diff| rounded up to the next 0.5 K, min 0.5."""
    peak = float(np.abs(diff).max()) if diff.size else 0.0
    return max(0.5, math.ceil(peak / 0.5) * 0.5)


def render_diff_rgb(diff: np.ndarray, bound: float | None = None) -> np.ndarray:
    """Diverging render of a signed difference: 0 K maps to white, + red, - blue."""
    if bound is None:
        bound = diff_bound(diff)
    norm = Normalize(vmin=-bound, vmax=bound)
    return cm.get_cmap("bwr")(norm(np.asarray(diff, dtype=np.float64)))


def plot_diff_map(pred, gt, out_path: str | Path, title: str = "") -> Path:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise ValueError(f"need matching 2-D grids, got {pred.shape} vs {gt.shape}")
    diff = pred - gt
    bound = diff_bound(diff)

    fig, (ax_pred, ax_diff) = plt.subplots(1, 2, figsize=(11, 4.6))
    im0 = ax_pred.imshow(pred, cmap="inferno")
    ax_pred.set_title("prediction [K]")
    fig.colorbar(im0, ax=ax_pred, fraction=0.046)
    im1 = ax_diff.imshow(diff, cmap="bwr", vmin=-bound, vmax=bound)
    ax_diff.set_title("prediction - reference [K]")
    fig.colorbar(im1, ax=ax_diff, fraction=0.046)
    for ax in (ax_pred, ax_diff):
        ax.set_xticks([])
        ax.set_yticks([])
    if title:
        fig.suptitle(title)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="png", dpi=130, bbox_inches="tight")
    plt.close(fig)
    return out_path
