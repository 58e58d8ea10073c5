"""Matplotlib rendering of cost reports."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}

COLORS = {
    "mean_pool": "#1b9e77",
    "attention_pool": "#7570b3",
    "topk_pool": "#e7298a",
    "xpool_style": "#d95f02",
    "xclip_style": "#666666",
}


def _log10(v: float) -> float:
    return math.log10(max(v, 1.0))


def render_cost_figure(reports, path) -> None:
    """Two panels: time vs. peak bytes (bubble area ~ ops) and ops vs. frame count."""
    with plt.rc_context(STYLE):
        fig, (ax_cost, ax_scale) = plt.subplots(1, 2, figsize=(8.0, 3.4))
        top_ops = max(r.analytic_ops for r in reports) or 1
        for strategy in sorted({r.strategy for r in reports}):
            rows = [r for r in reports if r.strategy == strategy]
            color = COLORS.get(strategy, "black")
            ax_cost.scatter(
                [max(r.time_ms, 1e-3) for r in rows],
                [max(r.peak_bytes, 1) for r in rows],
                s=[20 + 400 * r.analytic_ops / top_ops for r in rows],
                color=color, alpha=0.6, label=strategy, edgecolors="none",
            )
            rows = sorted(rows, key=lambda r: r.Nf)
            ax_scale.plot([r.Nf for r in rows], [r.analytic_ops for r in rows], "o-", color=color,
                          label=strategy, ms=3)
        ax_cost.set_xscale("log")
        ax_cost.set_yscale("log")
        ax_cost.set_xlabel("scoring time (ms)")
        ax_cost.set_ylabel("peak transient bytes")
        ax_cost.set_title("online scoring cost")
        ax_scale.set_yscale("log")
        ax_scale.set_xlabel("frames per video")
        ax_scale.set_ylabel("similarity terms")
        ax_scale.set_title("analytic count")
        ax_scale.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)


def render_curves(log_rows, path) -> None:
    """Training curves from metrics-log rows: losses on the left, R@1 on the right."""
    epochs = [r["epoch"] for r in log_rows]
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_r1) = plt.subplots(1, 2, figsize=(8.0, 3.0))
        ax_loss.plot(epochs, [r["l_con"] for r in log_rows], label="contrastive")
        ax_loss.plot(epochs, [r["l_cap"] for r in log_rows], label="captioning")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("loss")
        ax_loss.legend(frameon=False)
        ax_r1.plot(epochs, [r["r1_t2v"] for r in log_rows], label="text to video")
        ax_r1.plot(epochs, [r["r1_v2t"] for r in log_rows], label="video to text")
        ax_r1.set_xlabel("epoch")
        ax_r1.set_ylabel("held-out R@1 (%)")
        ax_r1.set_ylim(-2, 102)
        ax_r1.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
