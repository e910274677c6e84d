"""Run artifacts: per-fold CSVs, aggregate CSV, fold map, report, run metadata.

Everything except run_meta.json is byte-deterministic for a given config
and corpus: floats are written with repr (shortest round-trip form), rows
are explicitly ordered, and wall-clock facts live only in run_meta.json.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

from .metrics import SUMMARY_METRICS, FoldAggregate, MetricsReport, format_mean_std

# Fixed reference results for the two transformer baselines and the published
# run of this architecture. These are static published values: nothing in this
# package trains or evaluates a transformer, and these rows are never computed.
PUBLISHED_BASELINES = {
    ("PubMedBERT", "keywords"): {
        "micro_accuracy": (0.54, 0.31),
        "macro_precision": (0.38, 0.45),
        "macro_recall": (0.40, 0.45),
        "macro_f1": (0.39, 0.45),
        "weighted_precision": (0.45, 0.39),
        "weighted_recall": (0.54, 0.31),
        "weighted_f1": (0.46, 0.37),
    },
    ("PubMedBERT", "transcription"): {
        "micro_accuracy": (0.30, 0.07),
        "macro_precision": (0.02, 0.02),
        "macro_recall": (0.05, 0.02),
        "macro_f1": (0.03, 0.02),
        "weighted_precision": (0.11, 0.06),
        "weighted_recall": (0.30, 0.07),
        "weighted_f1": (0.15, 0.06),
    },
    ("RoBERTa", "keywords"): {
        "micro_accuracy": (0.56, 0.30),
        "macro_precision": (0.40, 0.46),
        "macro_recall": (0.41, 0.44),
        "macro_f1": (0.40, 0.46),
        "weighted_precision": (0.47, 0.34),
        "weighted_recall": (0.56, 0.30),
        "weighted_f1": (0.49, 0.34),
    },
    ("RoBERTa", "transcription"): {
        "micro_accuracy": (0.25, 0.06),
        "macro_precision": (0.01, 0.02),
        "macro_recall": (0.04, 0.02),
        "macro_f1": (0.02, 0.02),
        "weighted_precision": (0.08, 0.06),
        "weighted_recall": (0.25, 0.05),
        "weighted_f1": (0.11, 0.06),
    },
    ("Embedding MLP", "keywords"): {
        "micro_accuracy": (0.81, 0.01),
        "macro_precision": (0.84, 0.02),
        "macro_recall": (0.66, 0.02),
        "macro_f1": (0.72, 0.01),
        "weighted_precision": (0.90, 0.00),
        "weighted_recall": (0.81, 0.01),
        "weighted_f1": (0.83, 0.01),
    },
    ("Embedding MLP", "transcription"): {
        "micro_accuracy": (0.18, 0.01),
        "macro_precision": (0.08, 0.01),
        "macro_recall": (0.07, 0.00),
        "macro_f1": (0.07, 0.00),
        "weighted_precision": (0.16, 0.06),
        "weighted_recall": (0.18, 0.01),
        "weighted_f1": (0.17, 0.01),
    },
}

_BASELINE_MODELS = ("PubMedBERT", "RoBERTa", "Embedding MLP")


def stopword_digest(stopwords) -> str:
    """sha256 over the sorted stopword list, one token per line."""
    payload = "\n".join(sorted(stopwords)).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def _open_csv(path):
    return open(path, "w", encoding="utf-8", newline="")


def write_fold_csv(path, report: MetricsReport) -> None:
    """Per-class rows then summary rows, columns metric,class,value."""
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "class", "value"])
        for cm in report.per_class:
            writer.writerow(["precision", cm.label, repr(cm.precision)])
            writer.writerow(["recall", cm.label, repr(cm.recall)])
            writer.writerow(["f1", cm.label, repr(cm.f1)])
            writer.writerow(["support", cm.label, str(cm.support)])
        for name, value in report.summary().items():
            writer.writerow([name, "", repr(value)])


def write_aggregate_csv(path, aggregate: FoldAggregate) -> None:
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "mean", "std"])
        for name in SUMMARY_METRICS:
            mean, std = aggregate.stats[name]
            writer.writerow([name, repr(mean), repr(std)])


def write_folds_csv(path, plan) -> None:
    """The full fold assignment, one row per record id."""
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_id", "fold"])
        for row_id in sorted(plan.assignment):
            writer.writerow([str(row_id), str(plan.assignment[row_id])])


def _config_rows(config) -> list:
    rows = []
    for key in sorted(vars(config) if not hasattr(config, "__dataclass_fields__")
                      else config.__dataclass_fields__):
        value = getattr(config, key)
        if key == "sequence_length" and value is None:
            resolved = config.train_config().resolved_length
            rows.append((key, f"{resolved} (default for {config.input_field})"))
        else:
            rows.append((key, str(value)))
    return rows


def write_report_md(path, config, result, stopwords) -> None:
    """Markdown report: config echo, this run's results, published comparison."""
    agg = result.aggregate
    lines = []
    lines.append("# Medical specialty classification report")
    lines.append("")
    lines.append(f"Input field: `{config.input_field}`; "
                 f"{agg.k}-fold stratified cross-validation; seed {config.seed}.")
    lines.append("")
    lines.append("## Configuration")
    lines.append("")
    lines.append("| key | value |")
    lines.append("| --- | --- |")
    for key, value in _config_rows(config):
        lines.append(f"| {key} | {value} |")
    lines.append("")
    lines.append("## Results for this run")
    lines.append("")
    lines.append("| metric | mean ± std |")
    lines.append("| --- | --- |")
    for name in SUMMARY_METRICS:
        mean, std = agg.stats[name]
        lines.append(f"| {name} | {format_mean_std(mean, std)} |")
    lines.append("")
    lines.append("## Per-fold test metrics")
    lines.append("")
    lines.append("| fold | test size | micro_accuracy | macro_f1 | weighted_f1 | stopped epoch |")
    lines.append("| --- | --- | --- | --- | --- | --- |")
    for outcome in result.folds:
        r = outcome.report
        lines.append(
            f"| {outcome.fold} | {outcome.test_size} | {r.micro_accuracy:.4f} "
            f"| {r.macro_f1:.4f} | {r.weighted_f1:.4f} | {outcome.history.stopped_epoch} |"
        )
    lines.append("")
    lines.append("## Comparison with published results")
    lines.append("")
    lines.append("| model | input | micro acc | macro P | macro R | macro F1 "
                 "| weighted P | weighted R | weighted F1 | source |")
    lines.append("| --- | --- | --- | --- | --- | --- | --- | --- | --- | --- |")
    for model in _BASELINE_MODELS:
        for input_field in ("keywords", "transcription"):
            stats = PUBLISHED_BASELINES[(model, input_field)]
            cells = " | ".join(
                format_mean_std(*stats[name]) for name in SUMMARY_METRICS
            )
            lines.append(f"| {model} | {input_field} | {cells} | published (static) |")
    cells = " | ".join(format_mean_std(*agg.stats[name]) for name in SUMMARY_METRICS)
    lines.append(f"| Embedding MLP | {config.input_field} | {cells} | this run |")
    lines.append("")
    lines.append("Rows marked `published (static)` are fixed reference values quoted from "
                 "previously published experiments. This package does not train or evaluate "
                 "transformer models, so those rows are never recomputed here.")
    lines.append("")
    lines.append("## Conventions")
    lines.append("")
    lines.append("- precision and recall define 0/0 as 0")
    lines.append("- macro averages divide by the full class count, zero-support classes included")
    lines.append("- weighted averages weight each class by its true-label support")
    lines.append("- fold mean ± std uses the population std (divisor k)")
    lines.append(f"- stopword list sha256: `{stopword_digest(stopwords)}`")
    lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def write_run_meta(path, meta: dict) -> None:
    """Wall-clock facts and environment live here and nowhere else."""
    Path(path).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_run_outputs(out_dir, config, result, stopwords, meta: dict) -> list:
    """Write the full artifact set for one cross-validation run.

    Returns the list of paths written. run_meta.json is the only file
    allowed to differ between two identically configured runs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for outcome in result.folds:
        p = out / f"fold_{outcome.fold}.csv"
        write_fold_csv(p, outcome.report)
        written.append(p)
    p = out / "aggregate.csv"
    write_aggregate_csv(p, result.aggregate)
    written.append(p)
    p = out / "folds.csv"
    write_folds_csv(p, result.plan)
    written.append(p)
    p = out / "report.md"
    write_report_md(p, config, result, stopwords)
    written.append(p)
    p = out / "run_meta.json"
    write_run_meta(p, meta)
    written.append(p)
    return written
