"""Single-record inference shared by the CLI and the HTTP server.

Both front ends call predict_ranked and serialize with payload_json, so a
given model file and input text produce one answer, byte for byte, no
matter which door they come in through.
"""

from __future__ import annotations

import json

import numpy as np

from . import nn
from .errors import DataError
from .textprep import encode, normalize


def predict_ranked(model: nn.SavedModel, text: str, top_k: int = 3) -> list:
    """Rank specialties for one free-text input.

    Returns the top_k (specialty, probability) pairs, most probable first,
    ties broken by class id. Raises DataError when normalization leaves no
    usable tokens, so callers can distinguish "empty input" from a real
    low-confidence prediction.
    """
    if top_k < 1:
        raise DataError(f"top_k must be >= 1, got {top_k}")
    stopwords = frozenset(model.stopwords)
    tokens = normalize(text, stopwords)
    if not tokens:
        raise DataError("no usable tokens after normalization")
    length = int(model.hyperparams["seq_length"])
    ids = np.asarray([encode(tokens, model.vocab, length)], dtype=np.int64)
    probs, _ = nn.forward(model.params, ids, mode="infer")
    row = probs[0]
    order = np.argsort(-row, kind="stable")[: min(top_k, row.size)]
    return [(model.catalog.name_of(int(i)), float(row[i])) for i in order]


def payload_json(ranked) -> str:
    """The one serialization of a ranked prediction, used by CLI and server."""
    payload = {
        "predictions": [
            {"specialty": name, "probability": probability}
            for name, probability in ranked
        ]
    }
    return json.dumps(payload)
