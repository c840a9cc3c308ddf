"""Run artifacts: metrics CSV, summary JSON, histogram CSV, and figures.

Floats are serialized with repr (shortest round-trip form), so identical runs
produce byte-identical files. Figures are rendered with the Agg backend next
to the delimited outputs.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .policy import ScheduleRecord  # noqa: E402
from .trainer import RunMetrics  # noqa: E402

METRICS_HEADER = "epoch,retained,backprop_cum,train_loss,test_acc"
HISTOGRAM_HEADER = "sample_id,backprop_count"

_RC = {
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "n/a"
    return repr(float(x))


def write_metrics_csv(path: str | Path, metrics: RunMetrics) -> None:
    lines = [METRICS_HEADER]
    for i in range(metrics.epochs):
        lines.append(f"{i + 1},{metrics.retained[i]},{metrics.backprop_cum[i]},"
                     f"{_fmt(metrics.train_loss[i])},{_fmt(metrics.test_acc[i])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_summary_json(path: str | Path, metrics: RunMetrics, config_echo: dict) -> None:
    payload = {
        "effective_epochs": metrics.effective_epochs,
        "final_accuracy": metrics.final_accuracy,
        "config": config_echo,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def write_histogram_csv(path: str | Path, metrics: RunMetrics) -> None:
    lines = [HISTOGRAM_HEADER]
    lines.extend(f"{i},{int(c)}" for i, c in enumerate(metrics.sample_counts))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def render_run_figures(out_dir: str | Path, metrics: RunMetrics) -> list[Path]:
    """Training curves, the retained-per-epoch schedule, and the per-sample
    backprop histogram; returns the written paths."""
    out_dir = Path(out_dir)
    written = []
    epochs = np.arange(1, metrics.epochs + 1)
    with plt.rc_context(_RC):
        fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9.0, 3.8))
        ax_loss.plot(epochs, metrics.train_loss, marker="o", ms=3, color="tab:blue")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("train loss (backpropped rows)")
        ax_acc.plot(epochs, metrics.test_acc, marker="o", ms=3, color="tab:green")
        ax_acc.set_xlabel("epoch")
        ax_acc.set_ylabel("test accuracy")
        ax_acc.set_ylim(0.0, 1.0)
        fig.suptitle(f"{metrics.variant}: effective epochs {metrics.effective_epochs:.2f}")
        written.append(_save(fig, out_dir / "training_curves.png"))

        fig, ax = plt.subplots()
        ax.step(epochs, metrics.retained, where="mid", color="tab:blue")
        ax.fill_between(epochs, metrics.retained, step="mid", alpha=0.25, color="tab:blue")
        ax.axhline(metrics.n, color="0.4", lw=0.8, ls="--")
        ax.set_xlabel("epoch")
        ax.set_ylabel("samples backpropagated")
        ax.set_title(f"retained per epoch ({metrics.variant})")
        written.append(_save(fig, out_dir / "retained_schedule.png"))

        fig, ax = plt.subplots()
        top = int(metrics.sample_counts.max())
        ax.hist(metrics.sample_counts, bins=np.arange(top + 2) - 0.5,
                color="tab:purple", alpha=0.8)
        ax.axvline(metrics.epochs, color="0.4", lw=0.8, ls="--")
        ax.set_xlabel("backprop count per sample")
        ax.set_ylabel("samples")
        ax.set_title(f"per-sample backprop distribution ({metrics.variant})")
        written.append(_save(fig, out_dir / "backprop_histogram.png"))
    return written


def render_schedule_figure(path: str | Path, record: ScheduleRecord) -> Path:
    epochs = np.arange(1, record.epochs + 1)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.step(epochs, record.retained, where="mid", color="tab:orange")
        ax.axhline(record.n, color="0.4", lw=0.8, ls="--")
        ax.set_xlabel("epoch")
        ax.set_ylabel("retained samples")
        ax.set_title(f"schedule: effective epochs {record.effective_epochs:.3f}")
        return _save(fig, Path(path))


def render_sweep_figure(path: str | Path, rows: list[dict]) -> Path:
    """Scatter of final accuracy against effective epochs for finished runs."""
    done = [r for r in rows if r.get("effective_epochs") is not None]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for r in done:
            ax.scatter(r["effective_epochs"], r["final_acc"], color="tab:red", zorder=3)
            ax.annotate(r["label"], (r["effective_epochs"], r["final_acc"]),
                        textcoords="offset points", xytext=(5, 4), fontsize=8)
        ax.set_xlabel("effective epochs")
        ax.set_ylabel("final test accuracy")
        ax.set_title("sweep: accuracy vs backprop budget")
        return _save(fig, Path(path))


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
