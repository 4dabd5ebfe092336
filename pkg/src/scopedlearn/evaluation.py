"""Scoring: accuracy, precision-recall curves, average precision, and
error reduction between curves at a fixed recall level.

Binary tasks score the posterior probability of one designated positive
class. Curves place a threshold at every distinct score; predictions at or
above the threshold count as positive, and precision at zero predicted
positives is defined as 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ScoredPrediction",
    "PRCurve",
    "pr_curve",
    "average_precision",
    "token_accuracy",
    "precision_at_recall",
    "error_reduction_at_recall",
    "curve_csv_rows",
]


@dataclass(frozen=True)
class ScoredPrediction:
    score: float  # posterior probability of the positive class, in [0, 1]
    gold: bool

    def __post_init__(self):
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be a finite probability, got {self.score}")


@dataclass(frozen=True)
class PRCurve:
    points: tuple[tuple[float, float, float], ...]  # (threshold, precision, recall)

    def thresholds(self) -> list[float]:
        return [t for t, _, _ in self.points]

    def recalls(self) -> list[float]:
        return [r for _, _, r in self.points]


def _sorted_arrays(predictions: Sequence[ScoredPrediction]):
    scores = np.array([p.score for p in predictions], dtype=float)
    gold = np.array([p.gold for p in predictions], dtype=bool)
    if not gold.any():
        raise ValueError("no positive gold examples")
    order = np.argsort(-scores, kind="stable")
    return scores[order], gold[order]


def pr_curve(predictions: Sequence[ScoredPrediction]) -> PRCurve:
    """Precision-recall points with a threshold at every distinct score,
    ordered by increasing threshold (so recall is non-increasing)."""
    scores, gold = _sorted_arrays(predictions)
    positives = float(gold.sum())
    tp = np.cumsum(gold.astype(float))
    predicted = np.arange(1, len(scores) + 1, dtype=float)
    # Last index of each block of tied scores = the stats at that threshold.
    block_end = np.nonzero(np.append(scores[:-1] != scores[1:], True))[0]
    points = [
        (float(scores[i]), float(tp[i] / predicted[i]), float(tp[i] / positives))
        for i in reversed(block_end)
    ]
    return PRCurve(points=tuple(points))


def average_precision(predictions: Sequence[ScoredPrediction]) -> float:
    """Step-wise area under the precision-recall curve in [0, 1]."""
    curve = pr_curve(predictions)
    ap = 0.0
    prev_recall = 0.0
    for _, precision, recall in reversed(curve.points):  # descending threshold
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def token_accuracy(labels: Sequence[int], gold: Sequence[int]) -> float:
    labels = np.asarray(labels)
    gold = np.asarray(gold)
    if labels.shape != gold.shape or labels.size == 0:
        raise ValueError("labels and gold must be equal-length and non-empty")
    return float(np.mean(labels == gold))


def precision_at_recall(curve: PRCurve, recall_level: float) -> float:
    """Precision linearly interpolated in recall; ties at a recall keep the
    best precision. Errors when the level is outside the curve's range."""
    best: dict[float, float] = {}
    for _, precision, recall in curve.points:
        best[recall] = max(best.get(recall, 0.0), precision)
    recalls = sorted(best)
    if not recalls[0] <= recall_level <= recalls[-1]:
        raise ValueError(
            f"recall level {recall_level} outside the curve's range "
            f"[{recalls[0]}, {recalls[-1]}]"
        )
    pos = np.searchsorted(recalls, recall_level)
    if recalls[min(pos, len(recalls) - 1)] == recall_level or pos == 0:
        return best[recalls[min(pos, len(recalls) - 1)]]
    lo, hi = recalls[pos - 1], recalls[pos]
    w = (recall_level - lo) / (hi - lo)
    return (1.0 - w) * best[lo] + w * best[hi]


def error_reduction_at_recall(
    curve_a: PRCurve, curve_b: PRCurve, recall_level: float
) -> float:
    """Fractional reduction of (1 - precision) going from the baseline
    ``curve_a`` to the candidate ``curve_b`` at the given recall."""
    p_a = precision_at_recall(curve_a, recall_level)
    p_b = precision_at_recall(curve_b, recall_level)
    if p_a == p_b:
        return 0.0
    if p_a == 1.0:
        raise ValueError("baseline curve has zero error at this recall")
    return 1.0 - (1.0 - p_b) / (1.0 - p_a)


def curve_csv_rows(curve: PRCurve) -> list[str]:
    """Comma-separated (threshold, precision, recall) rows with a header."""
    rows = ["threshold,precision,recall"]
    rows.extend(f"{t!r},{p!r},{r!r}" for t, p, r in curve.points)
    return rows
