"""静的 SVG 出力 (Agg バックエンド、日付メタデータなし)"""

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

# SVG 内の id を固定して、同じデータから同じファイルを作る
STYLE = {
    "svg.hashsalt": "kolmocouple",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "figure.figsize": (6.0, 3.8),
}


def _save(fig, path):
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    logger.debug("wrote %s", path)
    return path


def plot_msd(stats, path, contraction=None):
    """E|X_t - Y_t|² (平均と中央値) の片対数プロット"""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        t = stats["t"].to_numpy()
        for column, label in (("mean_sq_diff", "mean"), ("median_sq_diff", "median")):
            y = stats[column].to_numpy()
            ok = np.isfinite(y) & (y > 0)
            ax.semilogy(t[ok], y[ok], label=label)
        if contraction is not None:
            t0, t1 = contraction["window"]
            sel = (t >= t0) & (t <= t1)
            y1 = contraction["predicted_final"]
            if sel.any() and y1 > 0:
                ax.semilogy(t[sel], y1 * np.exp(-2.0 * contraction["rate"] * (t[sel] - t[sel][-1])), "--",
                            label=f"fit rate {contraction['rate']:.4f}")
        ax.set_xlabel("t")
        ax.set_ylabel("|X_t - Y_t|^2")
        ax.legend()
        return _save(fig, path)


def plot_density(density, path, reference=None):
    """GridDensity の 1D 曲線または 2D 等高線"""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if density.dim == 1:
            x = density.axes[0]
            ax.plot(x, density.values, label="grid solution")
            if reference is not None:
                ax.plot(x, reference.density(x[:, None]), "--", label="reference")
                ax.legend()
            ax.set_xlabel("x")
            ax.set_ylabel("density")
        else:
            x, y = density.axes
            mesh = ax.pcolormesh(x, y, density.values.T, shading="nearest", rasterized=False)
            fig.colorbar(mesh, ax=ax)
            ax.set_xlabel("x1")
            ax.set_ylabel("x2")
            ax.set_aspect("equal")
        return _save(fig, path)


def plot_lyapunov(reports, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for rep in reports:
            ax.plot(rep.radii, rep.lv_max, label=f"max LV, p={rep.power:g}")
            stated = rep.extras.get("stated")
            if stated is not None:
                ax.plot(rep.radii, stated, ":", label="stated expression")
        ax.axhline(-reports[0].target, color="k", lw=0.8, ls="--")
        ax.set_xlabel("|x|")
        ax.set_ylabel("LV")
        ax.set_ylim(bottom=max(ax.get_ylim()[0], -50.0))
        ax.legend()
        return _save(fig, path)


def plot_residuals(report, path):
    """正規化した弱形式残差 (対数軸の棒グラフ)"""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        values = np.abs(np.array([e.normalized for e in report.entries], dtype=float))
        values = np.where(np.isfinite(values), values, np.nan)
        ax.bar(np.arange(len(values)), np.maximum(values, 1e-18))
        ax.set_yscale("log")
        ax.set_xlabel("test function")
        ax.set_ylabel("|residual| / C2 scale")
        ax.set_title(report.label)
        return _save(fig, path)
