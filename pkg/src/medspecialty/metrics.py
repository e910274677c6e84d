"""Confusion matrices and imbalance-aware classification metrics.

Conventions, pinned because the corpus has 40 classes of size 6..1103 and
folds may lack the tiny ones entirely:

- any 0/0 in precision, recall or F1 is defined as 0;
- the macro average divides by all C classes, including zero-support ones
  (this depresses macro scores and is stated in every report footer);
- the weighted average weights by support, so zero-support classes
  contribute nothing;
- across-fold std is the population std (divisor k).

For single-label classification weighted recall equals micro accuracy;
that identity is asserted in the tests rather than assumed here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import LabelCatalog
from .errors import DataError

SUMMARY_METRICS = (
    "micro_accuracy",
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "weighted_precision",
    "weighted_recall",
    "weighted_f1",
)


class ConfusionMatrix:
    """C x C counts, rows = true class, columns = predicted class."""

    def __init__(self, counts: np.ndarray, catalog: LabelCatalog):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (len(catalog), len(catalog)):
            raise DataError(
                f"confusion matrix shape {counts.shape} does not match catalog size {len(catalog)}"
            )
        self.counts = counts
        self.catalog = catalog

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(predicted, true, catalog: LabelCatalog) -> ConfusionMatrix:
    """Count (true, predicted) pairs of class ids into a matrix."""
    predicted = np.asarray(predicted, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if predicted.shape != true.shape or predicted.ndim != 1:
        raise DataError(
            f"prediction/truth length mismatch: {predicted.shape} vs {true.shape}"
        )
    c = len(catalog)
    if predicted.size and (
        predicted.min() < 0 or predicted.max() >= c or true.min() < 0 or true.max() >= c
    ):
        raise DataError(f"class id out of range for catalog of size {c}")
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (true, predicted), 1)
    return ConfusionMatrix(counts, catalog)


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def per_class_prf(matrix: ConfusionMatrix) -> list:
    """Per-class precision, recall, F1 and support, in catalog order."""
    counts = matrix.counts
    out = []
    for c in range(len(matrix.catalog)):
        tp = float(counts[c, c])
        precision = _safe_div(tp, float(counts[:, c].sum()))
        recall = _safe_div(tp, float(counts[c, :].sum()))
        f1 = _safe_div(2.0 * precision * recall, precision + recall)
        out.append(
            ClassMetrics(
                label=matrix.catalog.name_of(c), precision=precision, recall=recall,
                f1=f1, support=int(counts[c, :].sum()),
            )
        )
    return out


@dataclass(frozen=True)
class MetricsReport:
    """Per-class and aggregated metrics for one evaluation set."""

    per_class: tuple
    micro_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float

    def summary(self) -> dict:
        return {name: getattr(self, name) for name in SUMMARY_METRICS}


def aggregate_metrics(per_class, matrix: ConfusionMatrix) -> MetricsReport:
    """Micro accuracy plus macro and support-weighted averages."""
    total = matrix.total
    if total == 0:
        raise DataError("cannot aggregate metrics over zero examples")
    c = len(per_class)
    supports = np.array([m.support for m in per_class], dtype=np.float64)
    prf = np.array([[m.precision, m.recall, m.f1] for m in per_class], dtype=np.float64)
    macro = prf.sum(axis=0) / c
    weighted = (prf * supports[:, None]).sum(axis=0) / total
    return MetricsReport(
        per_class=tuple(per_class),
        micro_accuracy=float(np.trace(matrix.counts)) / total,
        macro_precision=float(macro[0]),
        macro_recall=float(macro[1]),
        macro_f1=float(macro[2]),
        weighted_precision=float(weighted[0]),
        weighted_recall=float(weighted[1]),
        weighted_f1=float(weighted[2]),
    )


def evaluate(predicted, true, catalog: LabelCatalog) -> MetricsReport:
    """Confusion -> per-class -> aggregates in one call."""
    matrix = confusion(predicted, true, catalog)
    return aggregate_metrics(per_class_prf(matrix), matrix)


@dataclass(frozen=True)
class FoldAggregate:
    """mean and population std of each summary metric across k folds."""

    k: int
    stats: dict  # metric name -> (mean, std)


def fold_aggregate(reports) -> FoldAggregate:
    reports = list(reports)
    if not reports:
        raise DataError("no fold reports to aggregate")
    stats = {}
    for name in SUMMARY_METRICS:
        values = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        stats[name] = (float(values.mean()), float(values.std()))  # population std
    return FoldAggregate(k=len(reports), stats=stats)


def format_mean_std(mean: float, std: float) -> str:
    """Two-decimal "mean ± std" rendering used by the report tables."""
    return f"{mean:.2f} ± {std:.2f}"
