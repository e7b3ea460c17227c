"""PNG figures for the artifact directory.

Rendering uses the Agg backend with the software tag removed from the PNG
metadata, so identical data give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import FreeBoundary  # noqa: E402
from .minimizer import Solution  # noqa: E402

_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_solution(sol: Solution, fb: FreeBoundary | None, path: str | Path) -> Path:
    g = sol.grid
    fig, ax = plt.subplots(figsize=(5, 4.2))
    if g.dim == 1:
        ax.plot(g.axes()[0], sol.u.values, lw=1.2)
        ax.set_xlabel("x")
        ax.set_ylabel("u")
    else:
        x, y = g.axes()
        im = ax.pcolormesh(x, y, sol.u.values.T, shading="auto", cmap="viridis")
        fig.colorbar(im, ax=ax, label="u")
        if fb is not None and not fb.empty:
            for i, j in fb.segments:
                ax.plot(fb.points[[i, j], 0], fb.points[[i, j], 1], color="w", lw=0.8)
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    ax.set_title("minimizer and free boundary")
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_energy(trace: Sequence[float], path: str | Path) -> Path:
    E = np.asarray(trace, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    gap = E - E[-1]
    pos = gap > 0
    if pos.sum() >= 2:
        ax.semilogy(np.flatnonzero(pos), gap[pos], marker=".", lw=1)
        ax.set_ylabel("E - E_final")
    else:
        ax.plot(E, marker=".", lw=1)
        ax.set_ylabel("energy")
    ax.set_xlabel("sweep")
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_profiles(profiles: dict[str, list[tuple[np.ndarray, np.ndarray]]], path: str | Path) -> Path:
    """One panel per quantity, one line per center."""
    names = list(profiles)
    fig, axes = plt.subplots(1, len(names), figsize=(3.2 * len(names), 3.2), squeeze=False)
    for ax, name in zip(axes[0], names):
        for r, v in profiles[name]:
            ax.semilogx(r, v, marker="o", ms=3, lw=1)
        ax.set_title(name)
        ax.set_xlabel("r")
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_fbc(ratio: np.ndarray, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(len(ratio)), ratio, ".", ms=4)
    ax.axhline(1.0, color="k", lw=0.6)
    ax.set_xlabel("free boundary sample")
    ax.set_ylabel("measured / predicted slope")
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_cascade(radii: np.ndarray, eps: np.ndarray, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    keep = eps > 0
    if keep.any():
        ax.loglog(radii[keep], eps[keep], marker="o", lw=1)
    else:
        ax.semilogx(radii, eps, marker="o", lw=1)
    ax.set_xlabel("r_k")
    ax.set_ylabel("flatness epsilon_k")
    fig.tight_layout()
    return _save(fig, Path(path))
