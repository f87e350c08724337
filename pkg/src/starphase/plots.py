"""Matplotlib renderings of the sweep outputs, written next to the CSVs."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _by_series(rows, key_cols, x_col, y_col):
    series = defaultdict(list)
    for row in rows:
        key = tuple(row[c] for c in key_cols)
        series[key].append((row[x_col], row[y_col]))
    return {k: np.array(sorted(v)) for k, v in series.items()}


def fisher_sweep_plot(rows, path: Path) -> None:
    fig, (ax_f, ax_t) = plt.subplots(1, 2, figsize=(9.6, 3.8))
    for (kind, n), data in _by_series(rows, (2, 3), 0, 5).items():
        ax_f.semilogy(data[:, 0], data[:, 1], "o-", ms=3, label=f"{kind} (N={n})")
    ax_f.set_xlabel("baseline L (km)")
    ax_f.set_ylabel("Fisher information per window")
    ax_f.legend(fontsize=8)
    ax_f.grid(alpha=0.3)
    for (kind, n), data in _by_series(rows, (2, 3), 0, 6).items():
        finite = np.isfinite(data[:, 1])
        ax_t.loglog(data[finite, 0], data[finite, 1], "o-", ms=3, label=f"{kind} (N={n})")
    ax_t.set_xlabel("baseline L (km)")
    ax_t.set_ylabel(r"CRB $\delta\theta$ ($\mu$as)")
    ax_t.legend(fontsize=8)
    ax_t.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def mu_opt_plot(rows, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for (kind,), data in _by_series(rows, (2,), 0, 3).items():
        ax.semilogy(data[:, 0], data[:, 1], "o-", ms=3, label=kind)
    ax.set_xlabel("baseline L (km)")
    ax.set_ylabel(r"optimized source intensity $\mu^*$")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def mle_sim_plot(rows, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for (windows,), data in _by_series(rows, (5,), 0, 7).items():
        ax.loglog(data[:, 0], data[:, 1], "o-", ms=3,
                  label=rf"MLE, $N_t$={int(windows):.0e}".replace("e+0", "e"))
    for (windows,), data in _by_series(rows, (5,), 0, 8).items():
        ax.loglog(data[:, 0], data[:, 1], "--", lw=1,
                  label=rf"CRB, $N_t$={int(windows):.0e}".replace("e+0", "e"))
    ax.set_xlabel("baseline L (km)")
    ax.set_ylabel(r"$\langle|\tilde\theta-\theta|\rangle$ ($\mu$as)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def detector_sweep_plot(rows, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for (xi,), data in _by_series(rows, (1,), 0, 4).items():
        ax.loglog(data[:, 0], data[:, 1], "o-", ms=3, label=rf"$\xi$={xi}")
    ax.set_xlabel("baseline L (km)")
    ax.set_ylabel(r"$\langle|\tilde\theta-\theta|\rangle$ ($\mu$as)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
