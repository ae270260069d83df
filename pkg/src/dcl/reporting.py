"""Report rendering: CSV emission plus matplotlib figures (SVG) for the
learned-function heatmaps and sweep curves.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def write_grid_csv(points: np.ndarray, values: np.ndarray, path: str | Path) -> None:
    """x,y,value rows (x,value for 1D grids)."""
    lines = []
    if points.shape[1] == 1:
        lines.append("x,value")
        for p, v in zip(points, values):
            lines.append(f"{p[0]:.10g},{v:.10g}")
    else:
        lines.append("x,y,value")
        for p, v in zip(points, values):
            lines.append(f"{p[0]:.10g},{p[1]:.10g},{v:.10g}")
    Path(path).write_text("\n".join(lines) + "\n")


def _as_image(points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Reshape grid samples back into a square image (cell-center grids)."""
    g = int(round(np.sqrt(points.shape[0])))
    if g * g != points.shape[0]:
        raise ValueError("grid is not square; cannot render heatmap")
    return values.reshape(g, g).T  # x along columns, y upward after origin flip


def heatmap_grid(panels: dict[str, tuple[np.ndarray, np.ndarray]],
                 path: str | Path, title: str = "") -> None:
    """One row of heatmaps sharing a color scale; ground truth belongs in the
    last entry.  Each panel is (points [G^2, 2], values [G^2])."""
    names = list(panels)
    vmin = min(float(np.min(v)) for _, v in panels.values())
    vmax = max(float(np.max(v)) for _, v in panels.values())
    if vmax - vmin < 1e-12:
        vmin, vmax = vmin - 0.5, vmax + 0.5
    fig, axes = plt.subplots(1, len(names), figsize=(2.4 * len(names), 2.6),
                             squeeze=False)
    for ax, name in zip(axes[0], names):
        pts, vals = panels[name]
        im = ax.imshow(_as_image(pts, vals), origin="lower", cmap="viridis",
                       vmin=vmin, vmax=vmax,
                       extent=(pts[:, 0].min(), pts[:, 0].max(),
                               pts[:, 1].min(), pts[:, 1].max()))
        ax.set_title(name, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=axes[0], fraction=0.03, pad=0.02)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def write_sweep_csv(rows: list[dict], path: str | Path) -> None:
    lines = ["loss,axis,value,seed,mcc,r2"]
    for r in rows:
        lines.append(f"{r['loss']},{r['axis']},{r['value']:.10g},{r['seed']},"
                     f"{r['mcc']:.6f},{r['r2']:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def sweep_plot(rows: list[dict], axis: str, path: str | Path) -> None:
    """Median MCC and R^2 per loss across the sweep axis."""
    losses = sorted({r["loss"] for r in rows})
    values = sorted({r["value"] for r in rows})
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
    for loss in losses:
        med_mcc, med_r2 = [], []
        for v in values:
            cell = [r for r in rows if r["loss"] == loss and r["value"] == v]
            med_mcc.append(np.median([r["mcc"] for r in cell]) if cell else np.nan)
            med_r2.append(np.median([r["r2"] for r in cell]) if cell else np.nan)
        ax1.plot(values, med_mcc, marker="o", label=loss)
        ax2.plot(values, med_r2, marker="o", label=loss)
    for ax, name in ((ax1, "MCC"), (ax2, "R$^2$")):
        ax.set_xlabel(axis)
        ax.set_ylabel(name)
        ax.set_ylim(0, 1.05)
        ax.grid(alpha=0.3)
    ax1.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def loss_curve_plot(losses: np.ndarray, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(np.arange(1, losses.size + 1), losses, lw=0.7)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
