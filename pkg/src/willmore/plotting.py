"""Figures for sweep tables and optimization histories (written to files, never shown)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _size(scale=1.0):
    w = 6.0 * scale
    return (w, w * (np.sqrt(5.0) - 1.0) / 2.0)


def plot_sweep(rows, path, title=None):
    """Energy and closed form against the sweep parameter, with the error on a log axis."""
    p = np.array([r["param"] for r in rows])
    e = np.array([r["energy"] for r in rows])
    c = np.array([r["closed_form"] for r in rows])
    err = np.array([r["abs_err"] for r in rows])
    with plt.rc_context(STYLE):
        fig, (ax, bx) = plt.subplots(1, 2, figsize=_size(1.4))
        ax.plot(p, e, "o-", label="energy")
        ax.plot(p, c, "k--", lw=1, label="closed form")
        ax.set_xscale("log")
        ax.set_xlabel("parameter")
        ax.set_ylabel("energy")
        ax.legend()
        bx.loglog(p, np.maximum(err, 1e-300), "s-", color="C3")
        bx.set_xlabel("parameter")
        bx.set_ylabel("|energy - closed form|")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_history(history, path, title=None):
    """Penalty value, energy, gradient norm and penalty weight per iteration."""
    it = np.array([h["iteration"] for h in history])
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 2, figsize=_size(1.4), sharex=True)
        axes[0, 0].plot(it, [h["F"] for h in history], label="F")
        axes[0, 0].plot(it, [h["W"] for h in history], label="W")
        axes[0, 0].set_ylabel("value")
        axes[0, 0].legend()
        axes[0, 1].semilogy(it, [h["grad_inf"] for h in history], color="C2")
        axes[0, 1].set_ylabel("max |grad F|")
        axes[1, 0].plot(it, [h["v0"] for h in history], label="v0")
        axes[1, 0].plot(it, [h["m0"] for h in history], label="m0")
        axes[1, 0].set_ylabel("reduced")
        axes[1, 0].legend()
        axes[1, 1].semilogy(it, [h["mu"] for h in history], color="C4")
        axes[1, 1].set_ylabel("mu")
        for ax in axes[1]:
            ax.set_xlabel("iteration")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
