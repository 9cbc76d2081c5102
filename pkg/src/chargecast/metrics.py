"""Occupied-class precision/recall/F1 and the metrics report format.

Predictions are thresholded at 0.5 (a prediction of exactly 0.5 counts
as occupied).  Ratios with a zero denominator are reported as 0.0 with a
``degenerate`` flag so aggregate numbers never hide an empty class.  The
report CSV has one row per test set plus a final ``macro`` row holding
the unweighted mean of the per-set scores over the summed counts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .errors import ShapeError

DECISION_THRESHOLD = 0.5

METRICS_CSV_HEADER = ["test_set", "precision", "recall", "f1", "tp", "fp", "fn", "tn"]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )


@dataclass(frozen=True)
class PrfScores:
    precision: float
    recall: float
    f1: float
    degenerate: bool


def confusion_counts(
    preds: np.ndarray, targets: np.ndarray, threshold: float = DECISION_THRESHOLD
) -> ConfusionCounts:
    """Count the confusion matrix of thresholded predictions.

    Args:
        preds: predicted probabilities, any shape.
        targets: 0/1 ground truth of the same shape.
        threshold: decision boundary; predictions >= threshold are
            counted as occupied.
    """
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets)
    if preds.shape != targets.shape:
        raise ShapeError(f"preds shape {preds.shape} does not match targets {targets.shape}")
    bad = (targets != 0) & (targets != 1)
    if np.any(bad):
        raise ShapeError("targets must be 0 or 1")
    decided = preds >= threshold
    actual = targets == 1
    tp = int(np.count_nonzero(decided & actual))
    fp = int(np.count_nonzero(decided & ~actual))
    fn = int(np.count_nonzero(~decided & actual))
    tn = int(np.count_nonzero(~decided & ~actual))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def prf_scores(counts: ConfusionCounts) -> PrfScores:
    """Precision, recall, F1 for the occupied class; 0/0 ratios become 0."""
    degenerate = False
    if counts.tp + counts.fp > 0:
        precision = counts.tp / (counts.tp + counts.fp)
    else:
        precision = 0.0
        degenerate = True
    if counts.tp + counts.fn > 0:
        recall = counts.tp / (counts.tp + counts.fn)
    else:
        recall = 0.0
        degenerate = True
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate = True
    return PrfScores(precision=precision, recall=recall, f1=f1, degenerate=degenerate)


def macro_average(scores: Sequence[PrfScores]) -> PrfScores:
    """Unweighted mean of per-set scores; degenerate if any input was."""
    if not scores:
        raise ShapeError("macro_average needs at least one score set")
    return PrfScores(
        precision=float(np.mean([s.precision for s in scores])),
        recall=float(np.mean([s.recall for s in scores])),
        f1=float(np.mean([s.f1 for s in scores])),
        degenerate=any(s.degenerate for s in scores),
    )


@dataclass(frozen=True)
class MetricsReport:
    """Per-test-set confusion counts and scores plus the macro summary."""

    counts: tuple[ConfusionCounts, ...]
    scores: tuple[PrfScores, ...]
    macro: PrfScores

    @classmethod
    def from_counts(cls, counts: Sequence[ConfusionCounts]) -> "MetricsReport":
        scores = tuple(prf_scores(c) for c in counts)
        return cls(counts=tuple(counts), scores=scores, macro=macro_average(scores))


def write_metrics_csv(report: MetricsReport, dest: str | Path | TextIO) -> None:
    """Write the report rows; the macro row carries the summed counts."""
    if isinstance(dest, (str, Path)):
        stream: TextIO = open(dest, "w", newline="")
        owned = True
    else:
        stream, owned = dest, False
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(METRICS_CSV_HEADER)
        for k, (counts, scores) in enumerate(zip(report.counts, report.scores), start=1):
            writer.writerow(
                [
                    k,
                    repr(scores.precision),
                    repr(scores.recall),
                    repr(scores.f1),
                    counts.tp,
                    counts.fp,
                    counts.fn,
                    counts.tn,
                ]
            )
        total = ConfusionCounts(0, 0, 0, 0)
        for c in report.counts:
            total = total + c
        writer.writerow(
            [
                "macro",
                repr(report.macro.precision),
                repr(report.macro.recall),
                repr(report.macro.f1),
                total.tp,
                total.fp,
                total.fn,
                total.tn,
            ]
        )
    finally:
        if owned:
            stream.close()
