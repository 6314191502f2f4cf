"""Figure rendering for training logs and evaluation reports.

Every CLI command that writes machine-readable output also drops PNG
figures next to it; this module owns those plots. Uses the Agg backend so
rendering works headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import EvalReport  # noqa: E402

_DPI = 120


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_pretrain_figures(history: Sequence[dict], out_dir: str | Path) -> list[Path]:
    """Loss curves plus learning rate / accuracy traces from a pre-training
    metrics log."""
    out = Path(out_dir)
    steps = [row["step"] for row in history]
    fig, (ax_loss, ax_aux) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax_loss.plot(steps, [row["mlm_loss"] for row in history], label="masked-token loss")
    ax_loss.plot(steps, [row["para_loss"] for row in history], label="same-paragraph loss")
    ax_loss.plot(steps, [row["loss"] for row in history], label="total", lw=0.8, color="gray")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    ax_aux.plot(steps, [row["para_accuracy"] for row in history], label="same-paragraph accuracy")
    ax_aux.set_ylabel("accuracy")
    ax_aux.set_ylim(0, 1.05)
    ax_lr = ax_aux.twinx()
    ax_lr.plot(steps, [row["lr"] for row in history], color="tab:red", alpha=0.5, label="lr")
    ax_lr.set_ylabel("learning rate", color="tab:red")
    ax_aux.set_xlabel("step")
    fig.tight_layout()
    return [_save(fig, out / "pretrain_curves.png")]


def save_finetune_figures(
    history: Sequence[dict], metric_name: str, out_dir: str | Path
) -> list[Path]:
    """Train loss and dev metric per epoch."""
    out = Path(out_dir)
    epochs = [row["epoch"] for row in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [row["train_loss"] for row in history], label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss")
    ax2 = ax.twinx()
    ax2.plot(epochs, [row[metric_name] for row in history], color="tab:green", label=metric_name)
    ax2.set_ylabel(metric_name, color="tab:green")
    ax2.set_ylim(0, 1.05)
    fig.tight_layout()
    return [_save(fig, out / "finetune_curves.png")]


def save_eval_figure(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Bar chart of the ranking/classification metrics."""
    out = Path(out_dir)
    names = ["P@1", "MAP", "MRR"]
    values = [report.p_at_1, report.map, report.mrr]
    if report.label_accuracy is not None:
        names.append("LA")
        values.append(report.label_accuracy)
    fig, ax = plt.subplots(figsize=(5, 4))
    bars = ax.bar(names, values, color="tab:blue")
    ax.bar_label(bars, fmt="%.3f")
    ax.set_ylim(0, 1.1)
    ax.set_ylabel("value")
    ax.set_title(f"{report.n_queries} queries")
    fig.tight_layout()
    return [_save(fig, out / "eval_metrics.png")]


def save_label_accuracy_figure(accuracy: float, n_queries: int, out_dir: str | Path) -> list[Path]:
    """Single-bar figure for classification-only evaluations."""
    out = Path(out_dir)
    fig, ax = plt.subplots(figsize=(3.5, 4))
    bars = ax.bar(["LA"], [accuracy], color="tab:blue")
    ax.bar_label(bars, fmt="%.3f")
    ax.set_ylim(0, 1.1)
    ax.set_title(f"{n_queries} claims")
    fig.tight_layout()
    return [_save(fig, out / "eval_metrics.png")]


def save_cost_figure(reports: Sequence, out_dir: str | Path) -> list[Path]:
    """Quadratic and linear cost ratios over a range of candidate counts."""
    out = Path(out_dir)
    ks = [r.k for r in reports]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, [r.quadratic_ratio for r in reports], marker="o", label="attention-bound ratio")
    ax.plot(ks, [r.linear_ratio for r in reports], marker="s", label="feed-forward-bound ratio")
    ax.axhline(1.0, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("candidates per input (k)")
    ax.set_ylabel("joint / pairwise inference time")
    ax.legend()
    fig.tight_layout()
    return [_save(fig, out / "cost_model.png")]
