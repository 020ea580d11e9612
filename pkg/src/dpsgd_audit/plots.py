"""Static figures rendered next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_CURVE_STYLES = {
    "observed": dict(color="tab:blue", lw=1.6),
    "pld": dict(color="tab:orange", lw=1.6, ls="--"),
    "mog": dict(color="tab:green", lw=1.6, ls=":"),
}
_CURVE_LABELS = {
    "observed": "observed",
    "pld": "all-iterates accountant",
    "mog": "linear-loss baseline",
}


def plot_tradeoffs(curves: dict, path, title: str | None = None) -> None:
    """FNR-vs-FPR comparison plot; ``curves`` maps name -> (alphas, betas)."""
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    ax.plot([0, 1], [1, 0], color="0.8", lw=0.8, label="random guess")
    for name, (alphas, betas) in curves.items():
        style = _CURVE_STYLES.get(name, dict(lw=1.4))
        ax.plot(alphas, betas, label=_CURVE_LABELS.get(name, name), **style)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("false negative rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)


def plot_audit_summary(targets, means, stds, path, title: str | None = None) -> None:
    """Empirical epsilon against the theoretical target, 2-sigma error bars."""
    targets = np.asarray(targets, dtype=float)
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    hi = max(targets.max(), np.nanmax(means)) * 1.15
    ax.plot([0, hi], [0, hi], color="0.8", lw=0.8, label="theoretical")
    ax.errorbar(
        targets,
        means,
        yerr=2.0 * stds,
        fmt="o",
        color="tab:blue",
        capsize=3,
        label="empirical (mean over runs)",
    )
    ax.set_xlabel("theoretical epsilon")
    ax.set_ylabel("empirical epsilon")
    ax.set_xlim(0, hi)
    ax.set_ylim(0, hi)
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
