"""Report figures rendered to files with the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    # fixed metadata keeps repeated renders byte-stable
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def loss_curves(rows: list[dict], columns: list[str], path, x: str = "epoch", title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [float(r[x]) for r in rows]
    for col in columns:
        ys = [float(r[col]) for r in rows]
        if any(ys):
            ax.plot(xs, ys, label=col)
    ax.set_xlabel(x)
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def occupancy_histogram(occupancies: dict[str, np.ndarray], mn: int, path) -> Path:
    """Per-mask one-count fractions, one histogram per labelled stage."""
    fig, ax = plt.subplots(figsize=(6, 4))
    bins = np.linspace(0.0, 1.0, 41)
    for label, occ in occupancies.items():
        ax.hist(np.asarray(occ) / mn, bins=bins, alpha=0.6, label=label)
    ax.set_xlabel("mask occupancy (fraction of pixels on)")
    ax.set_ylabel("masks")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def compression_sweep(rows: list[dict], path) -> Path:
    """PSNR versus measurement budget for LSI and the FSI baseline."""
    fig, ax = plt.subplots(figsize=(6, 4))
    rows = sorted(rows, key=lambda r: int(r["d"]))
    d = [int(r["d"]) for r in rows]
    ax.plot(d, [float(r["lsi_psnr"]) for r in rows], "o-", label="LSI")
    ax.plot(d, [float(r["fsi_psnr"]) for r in rows], "s--", label="FSI (inverse DFT)")
    ax.set_xscale("log", base=2)
    ax.set_xticks(d)
    ax.set_xticklabels([str(v) for v in d])
    ax.set_xlabel("measurements")
    ax.set_ylabel("held-out PSNR (dB)")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def reconstruction_grid(columns: dict[str, np.ndarray], path, count: int = 8) -> Path:
    """One column per method (first is usually ground truth); rows are images."""
    names = list(columns)
    count = min(count, min(len(v) for v in columns.values()))
    fig, axes = plt.subplots(count, len(names), figsize=(1.2 * len(names), 1.2 * count), squeeze=False)
    for j, name in enumerate(names):
        for i in range(count):
            img = np.asarray(columns[name][i])
            img = img[0] if img.ndim == 3 and img.shape[0] == 1 else np.moveaxis(img, 0, -1) if img.ndim == 3 else img
            ax = axes[i, j]
            ax.imshow(np.clip(img, 0, 1), cmap="gray", vmin=0, vmax=1)
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(name, fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
