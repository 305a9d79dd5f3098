"""Figures written next to the delimited reports."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METHOD_STYLE = {
    "tnpca": dict(color="#1b7837", marker="o", label="TN-PCA"),
    "hosvd": dict(color="#762a83", marker="s", label="HOSVD"),
    "hooi": dict(color="#e08214", marker="^", label="HOOI"),
}
U_MODE_TITLE = {"orthogonal": "Orthogonal U", "gaussian": "Non-orthogonal U"}

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _style(method):
    return METHOD_STYLE.get(method, dict(label=method))


def plot_study(report, out_dir, K: int | None = None) -> list[Path]:
    """Four panels per rank: core error vs SNR and cumulative variance explained, per U mode.

    Variance-explained panels show the highest SNR in the grid.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ranks = sorted({c.K for c in report.cells}) if K is None else [K]
    u_modes = [u for u in ("orthogonal", "gaussian") if any(c.u_mode == u for c in report.cells)]
    methods = list(dict.fromkeys(c.method for c in report.cells))
    written = []
    with plt.rc_context(RC):
        for rank in ranks:
            fig, axes = plt.subplots(1, 2 * len(u_modes), figsize=(3.2 * 2 * len(u_modes), 2.8), squeeze=False)
            for col, u in enumerate(u_modes):
                ax_err, ax_ve = axes[0, 2 * col], axes[0, 2 * col + 1]
                cells = [c for c in report.cells if c.u_mode == u and c.K == rank]
                snrs = sorted({c.snr for c in cells})
                for m in methods:
                    mc = sorted((c for c in cells if c.method == m), key=lambda c: c.snr)
                    if not mc:
                        continue
                    ax_err.errorbar(
                        [c.snr for c in mc],
                        [c.core_error_mean for c in mc],
                        yerr=[c.core_error_std for c in mc],
                        capsize=2,
                        ms=4,
                        **_style(m),
                    )
                    top = next((c for c in mc if c.snr == snrs[-1]), None)
                    if top is not None and top.variance_explained:
                        ve = np.asarray(top.variance_explained_mean)
                        ax_ve.plot(np.arange(1, ve.size + 1), ve, ms=4, **_style(m))
                ax_err.set_xscale("log", base=2)
                ax_err.set_xlabel("SNR")
                ax_err.set_ylabel("relative core error")
                ax_err.set_title(U_MODE_TITLE.get(u, u))
                ax_ve.set_xlabel("k")
                ax_ve.set_ylabel("cumulative variance explained")
                ax_ve.set_ylim(0, 1.02)
                ax_ve.set_title(f"{U_MODE_TITLE.get(u, u)}, SNR={snrs[-1]:g}" if snrs else "")
            axes[0, 0].legend(frameon=False)
            fig.tight_layout()
            path = out_dir / f"study_K{rank}.png"
            fig.savefig(path, metadata={"Software": None})
            plt.close(fig)
            written.append(path)
    return written


def plot_network(net, path, edges=None, title: str = "") -> Path:
    """Heatmap of a symmetric network; ``edges`` (i, j, value) are outlined if given."""
    net = np.asarray(net, dtype=float)
    lim = float(np.max(np.abs(net))) or 1.0
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4, 3.4))
        im = ax.imshow(net, cmap="RdBu_r", vmin=-lim, vmax=lim, interpolation="nearest")
        if edges:
            ii = [e[0] for e in edges] + [e[1] for e in edges]
            jj = [e[1] for e in edges] + [e[0] for e in edges]
            ax.scatter(jj, ii, s=12, facecolors="none", edgecolors="k", linewidths=0.6)
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_xlabel("node")
        ax.set_ylabel("node")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path
