"""Figures written next to the CSV output of a run."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _columns(series, prefix):
    return [c for c in series.names if c.startswith(prefix + "_")]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def plot_estimation(series, out_dir, tag: str = "") -> str:
    """Delta, s0, raw and finite-time estimates and their errors."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(2, 2, figsize=(8, 5.5))
        t = series.t
        for c in _columns(series, "Psi"):
            ax[0, 0].plot(t, series[c], lw=0.8)
        ax[0, 0].set_title("raw estimate")
        ax[0, 1].plot(t, series["delta"], label="delta")
        if "delta_D" in series:
            ax[0, 1].plot(t, series["delta_D"], label="delta (D path)")
        ax[0, 1].set_title("mixing determinant")
        ax[0, 1].legend()
        for c in _columns(series, "PsiF"):
            ax[1, 0].plot(t, series[c], lw=0.8)
        ax[1, 0].set_title("finite-time estimate")
        err = np.sqrt(sum(series[c] ** 2 for c in _columns(series, "err")))
        ax[1, 1].semilogy(t, np.maximum(err, 1e-300), label="raw error")
        ax[1, 1].semilogy(t, series["s0"], "--", label="s0")
        ax[1, 1].set_title("error norm")
        ax[1, 1].legend()
        for a in ax[1]:
            a.set_xlabel("t [s]")
        return _save(fig, Path(out_dir) / f"estimate{tag}.png")


def plot_search(trace, out_dir, K_star=None, gaps=None) -> str:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(1, 2, figsize=(8, 3))
        t = trace.times
        G = trace.gains.reshape(len(t), -1)
        for j in range(G.shape[1]):
            ax[0].plot(t, G[:, j], label=f"K_{j + 1}")
        ax[0].set_title("gain")
        ax[0].legend()
        if gaps is not None:
            ax[1].semilogy(t, np.maximum(gaps, 1e-300), label="f(K) - f(K*)")
        if K_star is not None:
            errs = np.linalg.norm(G - np.ravel(K_star)[None], axis=1)
            ax[1].semilogy(t, np.maximum(errs, 1e-300), label="|K - K*|")
        ax[1].semilogy(t, trace.grad_norms, ":", label="|grad f|")
        ax[1].legend()
        for a in ax:
            a.set_xlabel("search time")
        return _save(fig, Path(out_dir) / "search.png")


def plot_tracking(series, out_dir) -> str:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(1, 2, figsize=(8, 3))
        t = series.t
        for c in series.names:
            if c[0] in "xv" and c[1:].isdigit():
                ax[0].plot(t, series[c], "-" if c[0] == "x" else "--", label=c)
        ax[0].legend()
        ax[0].set_title("states")
        ax[1].semilogy(t, np.maximum(series["err_norm"], 1e-300))
        ax[1].set_title("|x - v|")
        for a in ax:
            a.set_xlabel("t [s]")
        return _save(fig, Path(out_dir) / "track.png")
