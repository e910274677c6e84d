"""Dataset ingestion, label cataloguing, and stratified k-fold planning.

The input is an mtsamples-style CSV: a header row with at least the
columns `description`, `medical_specialty`, `sample_name`, `transcription`
and `keywords`, standard double-quote quoting, and quoted cells that may
contain commas and embedded newlines. A leading unnamed index column is
tolerated and becomes the row id.

Everything here is deterministic and purely functional: the same file and
the same (records, k, seed) always produce the same records and the same
fold plan.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

REQUIRED_COLUMNS = (
    "description",
    "medical_specialty",
    "sample_name",
    "transcription",
    "keywords",
)

TEXT_FIELDS = ("keywords", "transcription")


@dataclass(frozen=True)
class Record:
    """One dataset row. `specialty` is whitespace-trimmed; everything else verbatim."""

    row_id: int
    description: str
    specialty: str
    sample_name: str
    transcription: str
    keywords: str

    def text(self, input_field: str) -> str:
        """Return the chosen input text (`keywords` or `transcription`)."""
        if input_field not in TEXT_FIELDS:
            raise ConfigError(f"input_field must be one of {TEXT_FIELDS}, got {input_field!r}")
        return self.keywords if input_field == "keywords" else self.transcription


class LabelCatalog:
    """Bijection between specialty names and contiguous class ids.

    Labels are ordered lexicographically over their trimmed names, so ids
    do not depend on row order.
    """

    def __init__(self, labels):
        self.labels = tuple(labels)
        self.index = {name: i for i, name in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise DataError("duplicate labels in catalog")

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelCatalog) and self.labels == other.labels

    def id_of(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise DataError(f"unknown specialty label: {name!r}") from None

    def name_of(self, class_id: int) -> str:
        return self.labels[class_id]


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of every record id to exactly one of k folds."""

    k: int
    assignment: dict  # row_id -> fold id in 0..k-1
    seed: int

    def fold_of(self, row_id: int) -> int:
        return self.assignment[row_id]

    def split(self, records, fold: int):
        """(train_records, test_records) for one held-out fold.

        Records absent from the assignment are dropped: this lets a plan
        computed on the full corpus be applied to a filtered subset while
        keeping the assignment itself identical across runs.
        """
        train, test = [], []
        for r in records:
            f = self.assignment.get(r.row_id)
            if f is None:
                continue
            (test if f == fold else train).append(r)
        return train, test


def load_corpus(path) -> list:
    """Parse an mtsamples-style CSV into Records.

    Raises DataError for a missing file, a missing required column, a
    malformed row (wrong field count, named by 1-based line), a blank
    specialty cell, or duplicate row ids.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a CSV header") from None

        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: missing required column {missing[0]!r}")
        col = {name: header.index(name) for name in REQUIRED_COLUMNS}
        # pandas-style dump: first column unnamed -> it carries the row id
        id_col = 0 if header[0] == "" else None

        records = []
        seen_ids = set()
        for position, row in enumerate(reader):
            line = reader.line_num  # 1-based, header included
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {line}: expected {len(header)} fields, got {len(row)}"
                )
            if id_col is not None:
                try:
                    row_id = int(row[id_col])
                except ValueError:
                    raise DataError(f"{path}: line {line}: non-integer row id {row[id_col]!r}") from None
            else:
                row_id = position
            if row_id in seen_ids:
                raise DataError(f"{path}: line {line}: duplicate row id {row_id}")
            seen_ids.add(row_id)
            specialty = row[col["medical_specialty"]].strip()
            if not specialty:
                raise DataError(f"{path}: line {line}: empty medical_specialty")
            records.append(
                Record(
                    row_id=row_id,
                    description=row[col["description"]],
                    specialty=specialty,
                    sample_name=row[col["sample_name"]],
                    transcription=row[col["transcription"]],
                    keywords=row[col["keywords"]],
                )
            )
    return records


def class_histogram(records) -> dict:
    """Specialty -> record count (sums to len(records))."""
    return dict(Counter(r.specialty for r in records))


def drop_missing(records, input_field: str) -> list:
    """Remove records whose chosen field is empty or whitespace-only."""
    if input_field not in TEXT_FIELDS:
        raise ConfigError(f"input_field must be one of {TEXT_FIELDS}, got {input_field!r}")
    return [r for r in records if r.text(input_field).strip()]


def build_catalog(records) -> LabelCatalog:
    """Catalog over the distinct specialty values, lexicographically ordered."""
    if not records:
        raise DataError("cannot build a label catalog from an empty corpus")
    return LabelCatalog(sorted({r.specialty for r in records}))


def stratified_kfold(records, catalog: LabelCatalog, k: int, seed: int) -> FoldPlan:
    """Deterministic stratified fold assignment.

    Within each class (visited in catalog order) the members are shuffled
    with the seeded generator and dealt round-robin across folds, so every
    (class, fold) count is floor(n_c/k) or ceil(n_c/k). The round-robin
    start is offset by the class id, which spreads the per-class remainders
    over different folds instead of piling them all on fold 0. Classes
    smaller than k are kept; some folds simply lack them.
    """
    if k < 2:
        raise ConfigError(f"fold count must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    by_class = {label: [] for label in catalog.labels}
    for r in records:
        if r.specialty not in by_class:
            raise DataError(f"record {r.row_id} has label {r.specialty!r} absent from catalog")
        by_class[r.specialty].append(r.row_id)

    assignment = {}
    for class_id, label in enumerate(catalog.labels):
        ids = by_class[label]
        order = rng.permutation(len(ids))
        for position, j in enumerate(order):
            assignment[ids[j]] = (position + class_id) % k
    return FoldPlan(k=k, assignment=assignment, seed=seed)
