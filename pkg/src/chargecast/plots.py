"""Figure rendering for the report-producing commands.

Every command that writes a delimited report also renders a matching
PNG next to it: training emits the loss curve, evaluation a score/count
summary, ablation the percent-point deltas, and the sweep a score line
per input horizon.  The Agg backend keeps this headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .experiments import AblationResult, SweepResult
from .metrics import MetricsReport

_DPI = 120


def _finish(fig: "plt.Figure", path: str | Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_loss_curve(history: Sequence[float], path: str | Path) -> None:
    """Per-epoch mean training loss."""
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = range(1, len(history) + 1)
    ax.plot(epochs, list(history), marker="o", color="#2c7fb8")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.set_title("Training loss")
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def plot_metrics_report(report: MetricsReport, path: str | Path) -> None:
    """Grouped bars of precision/recall/F1 per test set plus the macro row."""
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = [str(k) for k in range(1, len(report.scores) + 1)] + ["macro"]
    precision = [s.precision for s in report.scores] + [report.macro.precision]
    recall = [s.recall for s in report.scores] + [report.macro.recall]
    f1 = [s.f1 for s in report.scores] + [report.macro.f1]
    x = range(len(labels))
    width = 0.27
    ax.bar([i - width for i in x], precision, width, label="precision", color="#7fcdbb")
    ax.bar(list(x), recall, width, label="recall", color="#41b6c4")
    ax.bar([i + width for i in x], f1, width, label="F1", color="#2c7fb8")
    ax.set_xticks(list(x), labels)
    ax.set_xlabel("test set")
    ax.set_ylim(0, 1)
    ax.set_title("Occupied-class scores per test set")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    _finish(fig, path)


def plot_ablation_deltas(results: Sequence[AblationResult], path: str | Path) -> None:
    """Horizontal bars: macro F1 change (percent points) per ablation."""
    full = results[0].report.macro.f1
    names = [r.spec.name for r in results[1:]]
    deltas = [(r.report.macro.f1 - full) * 100.0 for r in results[1:]]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    colors = ["#d95f02" if d < 0 else "#1b9e77" for d in deltas]
    ax.barh(names, deltas, color=colors)
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("macro F1 change vs. full model (percent points)")
    ax.set_title("Feature and component ablations")
    ax.grid(True, axis="x", alpha=0.3)
    _finish(fig, path)


def plot_horizon_sweep(results: Sequence[SweepResult], path: str | Path) -> None:
    """Macro scores as the input horizon grows."""
    hours = [r.input_hours for r in results]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(hours, [r.report.macro.precision for r in results], marker="s", label="precision", color="#7fcdbb")
    ax.plot(hours, [r.report.macro.recall for r in results], marker="^", label="recall", color="#41b6c4")
    ax.plot(hours, [r.report.macro.f1 for r in results], marker="o", label="F1", color="#2c7fb8")
    ax.set_xlabel("input horizon (hours)")
    ax.set_ylabel("macro score")
    ax.set_title("Input-horizon sweep")
    ax.set_ylim(0, 1)
    ax.legend()
    ax.grid(True, alpha=0.3)
    _finish(fig, path)
