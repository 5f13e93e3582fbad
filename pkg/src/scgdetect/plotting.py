"""Figures written to image files (no interactive display)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_scores(rows: list[dict], path) -> Path:
    """Grouped precision / recall / F1 bars, one group per report row."""
    labels = [r["label"] for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(rows) + 2), 3.5))
    for j, key in enumerate(("precision", "recall", "f1")):
        ax.bar(x + (j - 1) * 0.27, [r[key] for r in rows], width=0.27, label=key)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def plot_per_user(reports: dict[str, dict], path, title: str = "") -> Path:
    """Per-user F1 for each named report of one run (e.g. initial vs personalized)."""
    users = sorted({u for rep in reports.values() for u in rep["per_user"]})
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(users) + 2), 3.5))
    for name, rep in reports.items():
        f1 = [rep["per_user"].get(u, {}).get("f1", np.nan) for u in users]
        ax.plot(range(len(users)), f1, marker="o", label=name)
    ax.set_xticks(range(len(users)))
    ax.set_xticklabels(users, rotation=45, ha="right", fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("F1")
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_trace(signal, probs, target, tau: float, path, fs: float = 64.0) -> Path:
    """One window: input channel, predicted probability, label mask and threshold."""
    signal, probs, target = (np.asarray(a, dtype=float).ravel() for a in (signal, probs, target))
    t = np.arange(len(probs)) / fs
    fig, (a0, a1) = plt.subplots(2, 1, sharex=True, figsize=(8, 4))
    a0.plot(t, signal, lw=0.8)
    a0.set_ylabel("input")
    a1.fill_between(t, 0, target, step="mid", alpha=0.3, label="label")
    a1.plot(t, probs, lw=0.9, label="probability")
    a1.axhline(tau, ls="--", lw=0.8, color="k", label=f"tau={tau:g}")
    a1.set_ylim(-0.02, 1.02)
    a1.set_xlabel("time (s)")
    a1.legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    return _save(fig, path)
