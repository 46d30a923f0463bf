"""Matplotlib renderings written next to the CSV/JSON reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Without a Software/date tag, Agg PNGs are byte-reproducible.
_PNG_META = {"Software": None}
SCATTER_POINTS = 20000


def _style(ax, xlabel, ylabel, title=None):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3, linewidth=0.5)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def noise_figure(report, path):
    """Signed error against exact product, on an evenly strided subset of samples."""
    exact = np.asarray(report.table["exact"], dtype=np.float64)
    err = np.asarray(report.table["error"], dtype=np.float64)
    stride = max(1, exact.size // SCATTER_POINTS)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(exact[::stride], err[::stride], s=1, alpha=0.4, color="tab:red", rasterized=True)
    ax.axhline(0, color="k", linewidth=0.6)
    _style(ax, "exact product", "approx - exact", f"multiplier noise ({report.config['multiplier']['backend']})")
    return _save(fig, path)


def confidence_figure(report, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    grid = report.table["confidence"]
    for key, values in report.table.items():
        if key.startswith("cdf_"):
            ax.step(grid, values, where="post", label=key[4:])
    ax.axvline(report.summary.get("threshold", 0.8), color="grey", linestyle="--", linewidth=0.8)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="upper left")
    _style(ax, "confidence (true minus runner-up)", "cumulative fraction")
    return _save(fig, path)


def similarity_figure(report, path):
    ranks = report.table["rank"]
    width = 0.38
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(ranks - width / 2, report.table["exact"], width, label="exact")
    ax.bar(ranks + width / 2, report.table["approx"], width, label=report.config["multiplier"]["backend"])
    ax.set_xticks(ranks)
    ax.legend()
    _style(ax, "similarity rank (1 = least similar)", "convolution output")
    return _save(fig, path)


def transfer_figure(report, path):
    names = [k for k, v in report.summary.items() if isinstance(v, dict)]
    rates = [report.summary[k]["success_rate"] or 0.0 for k in names]
    fig, ax = plt.subplots(figsize=(4, 3.5))
    ax.bar(names, rates, color=["tab:blue", "tab:orange", "tab:green", "tab:red"][:len(names)])
    ax.set_ylim(0, 1.05)
    _style(ax, "backend", "attack success rate")
    return _save(fig, path)


def whitebox_figure(report, path):
    backends = report.table["backend"]
    l2 = report.table["l2"]
    names = list(dict.fromkeys(backends.tolist()))
    data = [l2[(backends == n) & np.isfinite(l2)] for n in names]
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.boxplot([d if d.size else np.array([np.nan]) for d in data])
    ax.set_xticks(range(1, len(names) + 1), names)
    _style(ax, "backend", "L2 distortion at first success")
    return _save(fig, path)


def accuracy_figure(report, path):
    names = [k for k, v in report.summary.items() if isinstance(v, dict)]
    acc = [report.summary[k]["accuracy"] for k in names]
    fig, ax = plt.subplots(figsize=(4, 3.5))
    ax.bar(names, acc)
    ax.set_ylim(0, 1.05)
    _style(ax, "backend", "test accuracy")
    return _save(fig, path)


FIGURES = {
    "noise": noise_figure,
    "confidence": confidence_figure,
    "conv-similarity": similarity_figure,
    "transfer": transfer_figure,
    "whitebox": whitebox_figure,
    "accuracy": accuracy_figure,
}


def render(report, path):
    """Render the figure for ``report`` if its experiment has one; returns the path or None."""
    fn = FIGURES.get(report.experiment)
    return fn(report, path) if fn else None
