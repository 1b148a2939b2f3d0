"""Diagnostic figures written next to reports.

All rendering targets files through the Agg backend, so figures work in
headless runs; nothing here opens a window.  Each function writes one
PNG and returns the path.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .errors import ValidationError  # noqa: E402


def global_figure(results, path: str) -> str:
    """Null-draw histograms with the observed statistic and critical value.

    One panel per L; each panel shows the simulated f_L distribution,
    the critical value (dashed), and the observed statistic (solid).
    """
    results = results if isinstance(results, list) else [results]
    for r in results:
        if r.null_draws is None:
            raise ValidationError(
                "global test results carry no null draws to plot"
            )
    fig, axes = plt.subplots(1, len(results),
                             figsize=(4.2 * len(results), 3.4), squeeze=False)
    for ax, r in zip(axes[0], results):
        ax.hist(r.null_draws, bins=40, color="0.75", edgecolor="0.55")
        ax.axvline(r.critical_value, color="tab:orange", linestyle="--",
                   label=f"cv ({r.alpha:g})")
        ax.axvline(r.statistic, color="tab:blue",
                   label=f"W = {r.statistic:.3f}")
        ax.set_title(f"L={r.L}  ({'reject' if r.reject else 'retain'})")
        ax.set_xlabel("f_L of null draws")
        ax.legend(fontsize=8)
    axes[0][0].set_ylabel("draws")
    fig.suptitle(f"global test, {results[0].engine} engine")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def multiple_figure(result, labels, path: str) -> str:
    """Per-hypothesis scores against the rejection threshold t̂."""
    scores = result.scores
    q = np.arange(scores.size)
    rejected = np.array([i in result.rejected for i in q])
    fig, ax = plt.subplots(figsize=(max(5.0, 0.28 * scores.size + 2.0), 3.6))
    ax.vlines(q, 0.0, scores, color="0.8", linewidth=1.0)
    ax.plot(q[~rejected], scores[~rejected], "o", color="0.55",
            label="retained")
    if rejected.any():
        ax.plot(q[rejected], scores[rejected], "o", color="tab:red",
                label="rejected")
    ax.axhline(result.t_hat, color="tab:orange", linestyle="--",
               label=f"t_hat = {result.t_hat:.3f}"
               + (" (fallback)" if result.fallback_used else ""))
    ax.set_xlabel("hypothesis index q")
    ax.set_ylabel("score")
    if scores.size <= 40:
        ax.set_xticks(q)
        ax.set_xticklabels([labels[i] for i in q], rotation=90, fontsize=7)
    ax.legend(fontsize=8)
    fig.suptitle(f"multiple test, {result.engine} engine")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def experiment_figure(result, path: str) -> str:
    """Bar chart of the aggregated rates of one experiment cell."""
    rows = result.rows
    l_values = [row["L"] for row in rows]
    keys = [k for k in rows[0] if k != "L"]
    x = np.arange(len(l_values), dtype=float)
    width = 0.8 / len(keys)
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    for i, key in enumerate(keys):
        vals = [row[key] for row in rows]
        ax.bar(x + (i - (len(keys) - 1) / 2.0) * width, vals, width,
               label=key)
    cfg = result.config
    if cfg.test == "global" and cfg.scenario == "null":
        ax.axhline(cfg.alpha, color="0.3", linestyle=":",
                   label=f"alpha = {cfg.alpha:g}")
    ax.set_xticks(x)
    ax.set_xticklabels([f"L={lv}" for lv in l_values])
    ax.set_ylabel("rate")
    ax.set_title(f"{cfg.scenario} problem ({cfg.problem}) {cfg.test} "
                 f"[{result.engine}], {cfg.replications} reps")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
