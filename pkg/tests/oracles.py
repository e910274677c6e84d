"""Independent reference implementations used only by tests.

Everything here is written the dumbest defensible way (sets, loops,
fractions of Python ints) so disagreement with the package points at the
package.
"""


def oracle_metrics(predicted, true, n_classes):
    """Set-based per-class and aggregate metrics.

    Returns (per_class, summary) where per_class is a list of dicts with
    precision/recall/f1/support and summary matches SUMMARY_METRICS keys.
    """
    n = len(true)
    per_class = []
    for c in range(n_classes):
        pred_c = {i for i, p in enumerate(predicted) if p == c}
        true_c = {i for i, t in enumerate(true) if t == c}
        tp = len(pred_c & true_c)
        precision = tp / len(pred_c) if pred_c else 0.0
        recall = tp / len(true_c) if true_c else 0.0
        f1 = (2 * precision * recall / (precision + recall)) if (precision + recall) else 0.0
        per_class.append(
            {"precision": precision, "recall": recall, "f1": f1, "support": len(true_c)}
        )
    summary = {
        "micro_accuracy": sum(1 for p, t in zip(predicted, true) if p == t) / n,
        "macro_precision": sum(m["precision"] for m in per_class) / n_classes,
        "macro_recall": sum(m["recall"] for m in per_class) / n_classes,
        "macro_f1": sum(m["f1"] for m in per_class) / n_classes,
        "weighted_precision": sum(m["precision"] * m["support"] for m in per_class) / n,
        "weighted_recall": sum(m["recall"] * m["support"] for m in per_class) / n,
        "weighted_f1": sum(m["f1"] * m["support"] for m in per_class) / n,
    }
    return per_class, summary


def compare_to_oracle(report, predicted, true, n_classes, tol=1e-12):
    """Max absolute deviation of a MetricsReport from the oracle."""
    per_class, summary = oracle_metrics(predicted, true, n_classes)
    worst = 0.0
    for cm, ref in zip(report.per_class, per_class):
        worst = max(worst, abs(cm.precision - ref["precision"]))
        worst = max(worst, abs(cm.recall - ref["recall"]))
        worst = max(worst, abs(cm.f1 - ref["f1"]))
        if cm.support != ref["support"]:
            return float("inf")
    for name, ref_value in summary.items():
        worst = max(worst, abs(getattr(report, name) - ref_value))
    return worst
