"""Figures written next to the CSV/JSON reports."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_trace(trace: Sequence[dict], path, val_label: str = "validation") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ep = [r["epoch"] for r in trace]
        ax.plot(ep, [r["train_loss"] for r in trace], label="train loss")
        ax2 = ax.twinx()
        ax2.plot(ep, [r["val"] for r in trace], color="C1", label=val_label)
        ax.set_xlabel("epoch")
        ax.set_ylabel("train loss")
        ax2.set_ylabel(val_label)
        fig.legend(loc="upper right")
        return _save(fig, path)


def plot_rate_cdf(rates: Mapping[str, np.ndarray], path) -> Path:
    """Empirical CDFs of per-sample sum rates, one curve per solver."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, r in rates.items():
            r = np.sort(np.asarray(r))
            ax.step(r, np.arange(1, len(r) + 1) / len(r), where="post", label=f"{name} (mean {r.mean():.2f})")
        ax.set_xlabel("sum rate [bit/s/Hz]")
        ax.set_ylabel("CDF")
        ax.legend()
        return _save(fig, path)


def plot_components(generated: np.ndarray, reference: np.ndarray, path, bins: int = 50) -> Path:
    """Overlaid histograms of real, imaginary and magnitude parts."""
    parts = {"real": np.real, "imaginary": np.imag, "magnitude": np.abs}
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
        for ax, (name, f) in zip(axes, parts.items()):
            g, r = np.ravel(f(generated)), np.ravel(f(reference))
            edges = np.linspace(min(g.min(), r.min()), max(g.max(), r.max()), bins + 1)
            ax.hist(r, edges, density=True, alpha=0.5, label="reference")
            ax.hist(g, edges, density=True, alpha=0.5, label="generated")
            ax.set_title(name)
        axes[0].legend()
        return _save(fig, path)


def plot_by_level(levels_db: Sequence[float], series: Mapping[str, Sequence[float]], path,
                  ylabel: str) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, (name, ys) in enumerate(series.items()):
            ax.plot(levels_db, ys, marker="os^dv"[i % 5], label=name)
        ax.set_xlabel("error variance [dB]")
        ax.set_ylabel(ylabel)
        ax.legend()
        return _save(fig, path)
