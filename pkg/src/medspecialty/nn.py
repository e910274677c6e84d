"""The embedding+MLP specialty classifier, implemented from first principles.

Pipeline (batch of B id-sequences of length L):

    embedding lookup (B,L,d) -> flatten (B, L*d)
    -> dense1 (L*d -> h1) -> batchnorm -> ReLU
    -> dense2 (h1 -> 100) -> ReLU
    -> dense3 (100 -> 100) -> ReLU
    -> output dense (100 -> C) -> softmax

Batchnorm uses batch statistics (population variance, divisor B) in train
mode and running statistics in infer mode; running stats update as
running <- (1-momentum)*running + momentum*batch_stat. All math is double
precision; the backward pass is verified against central finite
differences by the gradient-check harness in `train`.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .backend import kernels
from .corpus import LabelCatalog
from .errors import DataError, NumericError
from .textprep import Vocabulary

HIDDEN2 = 100  # widths of the two fixed fully connected layers
HIDDEN3 = 100

MODEL_FORMAT_VERSION = 1

LEARNABLE_FIELDS = (
    "embedding",
    "dense1_w",
    "dense1_b",
    "bn_gamma",
    "bn_beta",
    "dense2_w",
    "dense2_b",
    "dense3_w",
    "dense3_b",
    "out_w",
    "out_b",
)


@dataclass
class ModelParams:
    """All learnable tensors plus batchnorm running statistics."""

    embedding: np.ndarray  # (V, d)
    dense1_w: np.ndarray  # (L*d, h1)
    dense1_b: np.ndarray  # (h1,)
    bn_gamma: np.ndarray  # (h1,)
    bn_beta: np.ndarray  # (h1,)
    bn_running_mean: np.ndarray  # (h1,)
    bn_running_var: np.ndarray  # (h1,)
    dense2_w: np.ndarray  # (h1, 100)
    dense2_b: np.ndarray  # (100,)
    dense3_w: np.ndarray  # (100, 100)
    dense3_b: np.ndarray  # (100,)
    out_w: np.ndarray  # (100, C)
    out_b: np.ndarray  # (C,)
    bn_eps: float = 1e-5
    bn_momentum: float = 0.01

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def seq_length(self) -> int:
        return self.dense1_w.shape[0] // self.embedding_dim

    @property
    def hidden1(self) -> int:
        return self.dense1_b.shape[0]

    @property
    def num_classes(self) -> int:
        return self.out_b.shape[0]

    def learnable(self) -> dict:
        """name -> tensor for everything that receives gradients (running stats excluded)."""
        return {name: getattr(self, name) for name in LEARNABLE_FIELDS}

    def copy(self) -> "ModelParams":
        kwargs = {}
        for f in fields(self):
            value = getattr(self, f.name)
            kwargs[f.name] = value.copy() if isinstance(value, np.ndarray) else value
        return ModelParams(**kwargs)

    def all_finite(self) -> bool:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray) and not np.isfinite(value.sum()):
                if not np.isfinite(value).all():
                    return False
        return True


@dataclass
class Gradients:
    """Loss gradients, one tensor per learnable field."""

    embedding: np.ndarray
    dense1_w: np.ndarray
    dense1_b: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    dense2_w: np.ndarray
    dense2_b: np.ndarray
    dense3_w: np.ndarray
    dense3_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    def by_name(self) -> dict:
        return {name: getattr(self, name) for name in LEARNABLE_FIELDS}


@dataclass
class ForwardCache:
    """Intermediate activations a train-mode backward pass needs."""

    ids: np.ndarray
    x_flat: np.ndarray
    z1: np.ndarray
    bn_xhat: np.ndarray | None
    bn_std_inv: np.ndarray | None
    bn_out: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    z3: np.ndarray
    a3: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    mode: str


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(seed, vocab_size, embedding_dim, seq_length, hidden1, num_classes,
                bn_eps: float = 1e-5, bn_momentum: float = 0.01) -> ModelParams:
    """Deterministic initialization: uniform(-0.05, 0.05) embedding, Glorot
    dense weights, zero biases, identity batchnorm."""
    for name, dim in (
        ("vocab_size", vocab_size),
        ("embedding_dim", embedding_dim),
        ("seq_length", seq_length),
        ("hidden1", hidden1),
        ("num_classes", num_classes),
    ):
        if dim < 1:
            raise DataError(f"{name} must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out):
        limit = glorot_limit(fan_in, fan_out)
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    flat = seq_length * embedding_dim
    return ModelParams(
        embedding=rng.uniform(-0.05, 0.05, size=(vocab_size, embedding_dim)),
        dense1_w=glorot(flat, hidden1),
        dense1_b=np.zeros(hidden1),
        bn_gamma=np.ones(hidden1),
        bn_beta=np.zeros(hidden1),
        bn_running_mean=np.zeros(hidden1),
        bn_running_var=np.ones(hidden1),
        dense2_w=glorot(hidden1, HIDDEN2),
        dense2_b=np.zeros(HIDDEN2),
        dense3_w=glorot(HIDDEN2, HIDDEN3),
        dense3_b=np.zeros(HIDDEN3),
        out_w=glorot(HIDDEN3, num_classes),
        out_b=np.zeros(num_classes),
        bn_eps=bn_eps,
        bn_momentum=bn_momentum,
    )


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax over the last axis; rows sum to 1."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Log-probabilities straight from shifted logits (log-sum-exp), never log(softmax)."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def batchnorm_forward(x: np.ndarray, params: ModelParams, mode: str):
    """Normalize per feature; returns (out, xhat, std_inv) with the latter
    two None in infer mode. Train mode updates the running statistics."""
    if mode == "train":
        if x.shape[0] < 2:
            raise NumericError("train-mode batchnorm needs batch size >= 2 (batch variance degenerate)")
        mean = x.mean(axis=0)
        var = x.var(axis=0)  # population variance, divisor B
        std_inv = 1.0 / np.sqrt(var + params.bn_eps)
        xhat = (x - mean) * std_inv
        momentum = params.bn_momentum
        params.bn_running_mean *= 1.0 - momentum
        params.bn_running_mean += momentum * mean
        params.bn_running_var *= 1.0 - momentum
        params.bn_running_var += momentum * var
        return params.bn_gamma * xhat + params.bn_beta, xhat, std_inv
    if mode == "infer":
        xhat = (x - params.bn_running_mean) / np.sqrt(params.bn_running_var + params.bn_eps)
        return params.bn_gamma * xhat + params.bn_beta, None, None
    raise DataError(f"mode must be 'train' or 'infer', got {mode!r}")


def forward(params: ModelParams, ids, mode: str):
    """Run the network on a batch of id sequences.

    Returns (probabilities (B,C), ForwardCache). Train mode uses batch
    statistics in batchnorm and updates the running statistics; infer mode
    is a pure function of params.
    """
    if mode not in ("train", "infer"):
        raise DataError(f"mode must be 'train' or 'infer', got {mode!r}")
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    if ids.ndim != 2:
        raise DataError(f"ids must be a (batch, length) matrix, got shape {ids.shape}")
    if ids.shape[1] != params.seq_length:
        raise DataError(
            f"sequence length {ids.shape[1]} does not match model length {params.seq_length}"
        )
    if ids.size and (ids.min() < 0 or ids.max() >= params.vocab_size):
        raise DataError(f"token id out of range [0, {params.vocab_size})")
    if mode == "train" and ids.shape[0] < 2:
        raise NumericError("train-mode forward needs batch size >= 2 (batch variance degenerate)")

    batch = ids.shape[0]
    x_flat = np.empty((batch, params.seq_length * params.embedding_dim))
    kernels.embedding_gather(params.embedding, ids, x_flat)

    z1 = x_flat @ params.dense1_w + params.dense1_b
    bn_out, bn_xhat, bn_std_inv = batchnorm_forward(z1, params, mode)
    a1 = relu(bn_out)
    z2 = a1 @ params.dense2_w + params.dense2_b
    a2 = relu(z2)
    z3 = a2 @ params.dense3_w + params.dense3_b
    a3 = relu(z3)
    logits = a3 @ params.out_w + params.out_b
    probs = softmax(logits)

    cache = ForwardCache(
        ids=ids, x_flat=x_flat, z1=z1, bn_xhat=bn_xhat, bn_std_inv=bn_std_inv,
        bn_out=bn_out, a1=a1, z2=z2, a2=a2, z3=z3, a3=a3, logits=logits,
        probs=probs, mode=mode,
    )
    return probs, cache


def batchnorm_backward(d_out, xhat, std_inv, gamma):
    """Gradient through y = gamma*xhat + beta with batch statistics.

    Uses the fused form for population-variance batchnorm:
        dx = std_inv/B * (B*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
    """
    batch = d_out.shape[0]
    dgamma = (d_out * xhat).sum(axis=0)
    dbeta = d_out.sum(axis=0)
    dxhat = d_out * gamma
    dx = (std_inv / batch) * (
        batch * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
    )
    return dx, dgamma, dbeta


def backward(params: ModelParams, cache: ForwardCache, labels) -> Gradients:
    """Gradients of mean cross-entropy w.r.t. every learnable tensor.

    Requires a train-mode cache for the same batch. Embedding rows for
    tokens absent from the batch keep an exactly-zero gradient; the PAD row
    is trainable like any other.
    """
    if cache.mode != "train":
        raise DataError("backward requires a cache produced by a train-mode forward")
    labels = np.asarray(labels, dtype=np.int64)
    batch = cache.ids.shape[0]
    if labels.shape != (batch,):
        raise DataError(f"labels shape {labels.shape} does not match batch size {batch}")
    if labels.min() < 0 or labels.max() >= params.num_classes:
        raise DataError(f"label out of range [0, {params.num_classes})")

    # softmax + cross-entropy collapses to (p - onehot)/B at the logits
    dlogits = cache.probs.copy()
    dlogits[np.arange(batch), labels] -= 1.0
    dlogits /= batch

    d_out_w = cache.a3.T @ dlogits
    d_out_b = dlogits.sum(axis=0)
    da3 = dlogits @ params.out_w.T

    dz3 = da3 * (cache.z3 > 0)
    d_w3 = cache.a2.T @ dz3
    d_b3 = dz3.sum(axis=0)
    da2 = dz3 @ params.dense3_w.T

    dz2 = da2 * (cache.z2 > 0)
    d_w2 = cache.a1.T @ dz2
    d_b2 = dz2.sum(axis=0)
    da1 = dz2 @ params.dense2_w.T

    d_bn_out = da1 * (cache.bn_out > 0)
    dz1, dgamma, dbeta = batchnorm_backward(
        d_bn_out, cache.bn_xhat, cache.bn_std_inv, params.bn_gamma
    )

    d_w1 = cache.x_flat.T @ dz1
    d_b1 = dz1.sum(axis=0)
    dx_flat = np.ascontiguousarray(dz1 @ params.dense1_w.T)

    d_embedding = np.zeros_like(params.embedding)
    kernels.embedding_scatter_add(d_embedding, cache.ids, dx_flat)

    return Gradients(
        embedding=d_embedding,
        dense1_w=d_w1, dense1_b=d_b1,
        bn_gamma=dgamma, bn_beta=dbeta,
        dense2_w=d_w2, dense2_b=d_b2,
        dense3_w=d_w3, dense3_b=d_b3,
        out_w=d_out_w, out_b=d_out_b,
    )


@dataclass
class SavedModel:
    """Everything load_model recovers: enough to run inference end to end."""

    params: ModelParams
    vocab: Vocabulary
    catalog: LabelCatalog
    hyperparams: dict
    stopwords: frozenset


def _encode_tensor(name: str, arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "name": name,
        "shape": list(arr.shape),
        "dtype": "<f8",
        "data": base64.b64encode(data.tobytes()).decode("ascii"),
    }


def _decode_tensor(entry: dict, path) -> np.ndarray:
    if entry.get("dtype") != "<f8":
        raise DataError(f"{path}: tensor {entry.get('name')!r} has unsupported dtype")
    shape = tuple(entry["shape"])
    raw = base64.b64decode(entry["data"])
    expected = int(np.prod(shape, dtype=np.int64)) * 8
    if len(raw) != expected:
        raise DataError(
            f"{path}: tensor {entry['name']!r} payload is {len(raw)} bytes, shape {shape} needs {expected}"
        )
    return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()


TENSOR_FIELDS = LEARNABLE_FIELDS + ("bn_running_mean", "bn_running_var")


def save_model(params: ModelParams, vocab: Vocabulary, catalog: LabelCatalog,
               hyperparams: dict, path, stopwords=()) -> None:
    """Write a single self-describing JSON document.

    Tensors are base64-encoded little-endian float64, so load(save(m))
    reproduces every value bitwise. The stopword list rides along so
    prediction normalizes text exactly as training did.
    """
    tokens_by_id = sorted(vocab.token_to_id, key=vocab.token_to_id.get)
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "hyperparams": dict(hyperparams),
        "labels": list(catalog.labels),
        "vocab_tokens": tokens_by_id,  # token i has id i+2; PAD=0, UNK=1
        "vocab_min_count": vocab.min_count,
        "stopwords": sorted(stopwords),
        "tensors": [_encode_tensor(name, getattr(params, name)) for name in TENSOR_FIELDS],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> SavedModel:
    """Parse and validate a model file; raises DataError on any defect."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: not a valid model file: {exc}") from None

    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported format_version {version!r}, this build reads {MODEL_FORMAT_VERSION}"
        )
    try:
        hyper = doc["hyperparams"]
        catalog = LabelCatalog(doc["labels"])
        vocab = Vocabulary(
            {tok: i + 2 for i, tok in enumerate(doc["vocab_tokens"])},
            int(doc["vocab_min_count"]),
        )
        stopwords = frozenset(doc["stopwords"])
        tensors = {entry["name"]: _decode_tensor(entry, path) for entry in doc["tensors"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed model document: {exc}") from None

    missing = [name for name in TENSOR_FIELDS if name not in tensors]
    if missing:
        raise DataError(f"{path}: missing tensor {missing[0]!r}")
    params = ModelParams(
        **{name: tensors[name] for name in TENSOR_FIELDS},
        bn_eps=float(hyper.get("bn_eps", 1e-5)),
        bn_momentum=float(hyper.get("bn_momentum", 0.01)),
    )

    declared = {
        "embedding": (vocab.size, int(hyper["embedding_dim"])),
        "dense1_w": (int(hyper["seq_length"]) * int(hyper["embedding_dim"]), int(hyper["hidden1"])),
        "out_b": (len(catalog),),
    }
    for name, shape in declared.items():
        actual = getattr(params, name).shape
        if actual != shape:
            raise DataError(
                f"{path}: tensor {name!r} has shape {actual}, declared dims require {shape}"
            )
    return SavedModel(
        params=params, vocab=vocab, catalog=catalog, hyperparams=hyper, stopwords=stopwords
    )
