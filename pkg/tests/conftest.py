import csv
import os
from pathlib import Path

import numpy as np
import pytest

from medspecialty.corpus import Record

# The real corpus is not shipped with the package. Tests that need it look
# for data/mtsamples.csv under the repo root, or an explicit path in the
# MEDSPEC_DATASET environment variable, and skip otherwise.
REPO_ROOT = Path(__file__).resolve().parent.parent

KEYWORD_POOLS = {
    "Cardiology": ["heart", "chest", "palpitation", "angina", "aorta", "valve", "artery", "murmur"],
    "Dermatology": ["rash", "skin", "lesion", "itch", "eczema", "mole", "psoriasis", "acne"],
    "Neurology": ["seizure", "headache", "tremor", "migraine", "neuropathy", "vertigo", "stroke", "aura"],
    "Orthopedics": ["fracture", "knee", "ligament", "sprain", "tendon", "shoulder", "hip", "cartilage"],
}


def dataset_path():
    env = os.environ.get("MEDSPEC_DATASET")
    if env:
        p = Path(env)
        if not p.is_file():
            pytest.skip(f"MEDSPEC_DATASET points at {p}, which does not exist")
        return p
    p = REPO_ROOT / "data" / "mtsamples.csv"
    if p.is_file():
        return p
    pytest.skip(
        "corpus csv not available; place it at data/mtsamples.csv "
        "or set MEDSPEC_DATASET"
    )


@pytest.fixture(scope="session")
def corpus_csv():
    return dataset_path()


def make_toy_records(per_class=50, seed=7):
    """Four classes with disjoint keyword pools: linearly separable on purpose."""
    rng = np.random.default_rng(seed)
    records = []
    rid = 0
    for label, pool in KEYWORD_POOLS.items():
        for _ in range(per_class):
            k = int(rng.integers(3, 7))
            words = list(rng.choice(pool, size=k, replace=True))
            records.append(
                Record(
                    row_id=rid,
                    description=f"A {label} note.",
                    specialty=label,
                    sample_name=f"Sample {rid}",
                    transcription=" ".join(words) + " the patient and with",
                    keywords=", ".join(words),
                )
            )
            rid += 1
    return records


@pytest.fixture(scope="session")
def toy_records():
    return make_toy_records()


def write_toy_csv(path, records):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["", "description", "medical_specialty", "sample_name", "transcription", "keywords"]
        )
        for r in records:
            # leading space on the specialty mirrors the real corpus export
            writer.writerow(
                [r.row_id, r.description, f" {r.specialty}", r.sample_name,
                 r.transcription, r.keywords]
            )
    return path


@pytest.fixture()
def toy_csv(tmp_path, toy_records):
    return write_toy_csv(tmp_path / "toy.csv", toy_records)
