"""Training loop, Adam optimizer, early stopping, and the k-fold driver.

Determinism contract: every random draw derives from
(config.seed, fold_index, stream tag[, epoch]), so identical configs give
identical models, metrics and report bytes. Keyword and transcription runs
share fold assignments when the caller passes a plan computed on the full
corpus (the CLI does).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .backend import kernels
from .corpus import (
    FoldPlan,
    LabelCatalog,
    TEXT_FIELDS,
    build_catalog,
    stratified_kfold,
)
from .errors import ConfigError, DataError, NumericError
from .metrics import FoldAggregate, MetricsReport, evaluate, fold_aggregate
from .textprep import Vocabulary, encode, normalize

# stream tags for per-purpose RNG derivation
_STREAM_VAL_SPLIT = 1
_STREAM_INIT = 2
_STREAM_EPOCH = 3

DEFAULT_LENGTHS = {"keywords": 15, "transcription": 120}

EVAL_CHUNK = 512  # infer-mode row chunking; rows are independent, so this never changes results


@dataclass(frozen=True)
class TrainConfig:
    """Everything the training loop needs; defaults follow the experiment setup."""

    input_field: str = "keywords"
    sequence_length: int | None = None  # None -> 15 for keywords, 120 for transcription
    max_epochs: int = 200
    patience: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    validation_fraction: float = 0.1
    min_delta: float = 1e-6
    seed: int = 0
    embedding_dim: int = 64
    hidden1: int = 128
    min_count: int = 1
    bn_eps: float = 1e-5
    bn_momentum: float = 0.01

    @property
    def resolved_length(self) -> int:
        if self.sequence_length is not None:
            return self.sequence_length
        return DEFAULT_LENGTHS[self.input_field]

    def validate(self) -> "TrainConfig":
        if self.input_field not in TEXT_FIELDS:
            raise ConfigError(f"input_field must be one of {TEXT_FIELDS}, got {self.input_field!r}")
        if not 0.0 < self.validation_fraction < 0.5:
            raise ConfigError(
                f"validation_fraction must be in (0, 0.5), got {self.validation_fraction}"
            )
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2 for train-mode batchnorm, got {self.batch_size}")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("max_epochs and patience must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if min(self.embedding_dim, self.hidden1, self.min_count, self.resolved_length) < 1:
            raise ConfigError("embedding_dim, hidden1, min_count and sequence length must be >= 1")
        return self


def cross_entropy(log_probs, labels) -> float:
    """Mean negative log-probability of the true labels."""
    log_probs = np.asarray(log_probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if log_probs.ndim != 2 or labels.shape != (log_probs.shape[0],):
        raise DataError(
            f"expected (B,C) log-probs with B labels, got {log_probs.shape} and {labels.shape}"
        )
    if labels.size == 0:
        raise DataError("cross_entropy over zero examples")
    if labels.min() < 0 or labels.max() >= log_probs.shape[1]:
        raise DataError(f"label out of range [0, {log_probs.shape[1]})")
    return float(-log_probs[np.arange(labels.size), labels].mean())


class AdamState:
    """First/second moment per learnable tensor plus the shared timestep."""

    def __init__(self, params: nn.ModelParams):
        self.m = {name: np.zeros_like(t) for name, t in params.learnable().items()}
        self.v = {name: np.zeros_like(t) for name, t in params.learnable().items()}
        self.t = 0


def adam_step(params: nn.ModelParams, grads: nn.Gradients, state: AdamState,
              config: TrainConfig):
    """Standard bias-corrected Adam update, in place; returns (params, state)."""
    state.t += 1
    c1 = 1.0 - config.beta1 ** state.t
    c2 = 1.0 - config.beta2 ** state.t
    grad_by_name = grads.by_name()
    for name, tensor in params.learnable().items():
        kernels.adam_update(
            tensor.reshape(-1), grad_by_name[name].reshape(-1),
            state.m[name].reshape(-1), state.v[name].reshape(-1),
            config.learning_rate, config.beta1, config.beta2, config.adam_eps, c1, c2,
        )
    return params, state


class EarlyStopper:
    """Patience-based stopping on a monitored loss, with best-epoch tracking.

    An observation improves when it is strictly below best - min_delta.
    """

    def __init__(self, patience: int, min_delta: float = 1e-6):
        self.patience = patience
        self.min_delta = min_delta
        self.best_loss = math.inf
        self.best_epoch = 0
        self.epoch = 0
        self.since_best = 0

    def observe(self, loss: float) -> bool:
        self.epoch += 1
        if loss < self.best_loss - self.min_delta:
            self.best_loss = loss
            self.best_epoch = self.epoch
            self.since_best = 0
            return True
        self.since_best += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.since_best >= self.patience


@dataclass
class TrainHistory:
    """Per-epoch curves plus where training stopped and which epoch won."""

    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0


def _stratified_validation_split(records, config: TrainConfig, fold_index: int):
    """Carve a stratified validation subset out of the training records.

    Per class: round(n_c * fraction) validation records, but always at
    least one record stays on the training side, so singleton classes
    train and simply go unvalidated.
    """
    rng = np.random.default_rng([config.seed, fold_index, _STREAM_VAL_SPLIT])
    by_class = {}
    for r in records:
        by_class.setdefault(r.specialty, []).append(r)
    train, val = [], []
    for label in sorted(by_class):
        members = by_class[label]
        n_val = min(int(math.floor(len(members) * config.validation_fraction + 0.5)),
                    len(members) - 1)
        order = rng.permutation(len(members))
        for position, j in enumerate(order):
            (val if position < n_val else train).append(members[j])
    return train, val


def _encode_records(records, vocab: Vocabulary, catalog: LabelCatalog, config: TrainConfig,
                    stopwords):
    length = config.resolved_length
    ids = np.zeros((len(records), length), dtype=np.int64)
    labels = np.zeros(len(records), dtype=np.int64)
    for i, r in enumerate(records):
        tokens = normalize(r.text(config.input_field), stopwords)
        ids[i] = encode(tokens, vocab, length)
        labels[i] = catalog.id_of(r.specialty)
    return ids, labels


def _infer_probs(params: nn.ModelParams, ids: np.ndarray) -> np.ndarray:
    """Infer-mode forward in fixed-size chunks (memory bound, not results)."""
    chunks = []
    for start in range(0, len(ids), EVAL_CHUNK):
        probs, _ = nn.forward(params, ids[start:start + EVAL_CHUNK], mode="infer")
        chunks.append(probs)
    return np.concatenate(chunks) if chunks else np.zeros((0, params.num_classes))


def train_fold(records, config: TrainConfig, vocab: Vocabulary, catalog: LabelCatalog,
               fold_index: int = 0, stopwords=frozenset()):
    """Train one model on one training split; returns (best params, history).

    Early stopping monitors validation loss (training loss when the
    validation carve-out comes up empty) with min_delta and patience from
    the config, and the returned parameters are the best epoch's snapshot.
    """
    config.validate()
    if not records:
        raise DataError("train_fold needs a non-empty training split")

    train_records, val_records = _stratified_validation_split(records, config, fold_index)
    train_ids, train_labels = _encode_records(train_records, vocab, catalog, config, stopwords)
    val_ids, val_labels = _encode_records(val_records, vocab, catalog, config, stopwords)

    params = nn.init_params(
        [config.seed, fold_index, _STREAM_INIT],
        vocab.size, config.embedding_dim, config.resolved_length, config.hidden1, len(catalog),
        bn_eps=config.bn_eps, bn_momentum=config.bn_momentum,
    )
    state = AdamState(params)
    stopper = EarlyStopper(config.patience, config.min_delta)
    history = TrainHistory()
    best = params.copy()
    n_train = len(train_records)

    for epoch in range(1, config.max_epochs + 1):
        rng = np.random.default_rng([config.seed, fold_index, _STREAM_EPOCH, epoch])
        order = rng.permutation(n_train)
        loss_sum = 0.0
        seen = 0
        for start in range(0, n_train, config.batch_size):
            batch_idx = order[start:start + config.batch_size]
            if len(batch_idx) < 2:
                continue  # a solo trailing row cannot batchnorm; drop it this epoch
            batch_ids = train_ids[batch_idx]
            batch_labels = train_labels[batch_idx]
            _, cache = nn.forward(params, batch_ids, mode="train")
            batch_loss = cross_entropy(nn.log_softmax(cache.logits), batch_labels)
            if not math.isfinite(batch_loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            grads = nn.backward(params, cache, batch_labels)
            adam_step(params, grads, state, config)
            loss_sum += batch_loss * len(batch_idx)
            seen += len(batch_idx)
        if seen == 0:
            raise DataError("training split too small to form any batch of >= 2 records")
        epoch_train_loss = loss_sum / seen
        history.train_loss.append(epoch_train_loss)

        if len(val_records):
            val_probs = _infer_probs(params, val_ids)
            val_loss = cross_entropy(np.log(np.clip(val_probs, 1e-300, None)), val_labels)
            val_acc = float((val_probs.argmax(axis=1) == val_labels).mean())
            monitored = val_loss
        else:
            val_loss = math.nan
            val_acc = math.nan
            monitored = epoch_train_loss
        history.val_loss.append(val_loss)
        history.val_accuracy.append(val_acc)

        if not params.all_finite():
            raise NumericError(f"non-finite parameter after epoch {epoch}")
        if stopper.observe(monitored):
            best = params.copy()
        if stopper.should_stop:
            break

    history.best_epoch = stopper.best_epoch
    history.stopped_epoch = stopper.epoch
    return best, history


@dataclass
class FoldOutcome:
    """One fold's trained model, metrics, and training curve."""

    fold: int
    report: MetricsReport
    history: TrainHistory
    vocab_size: int
    test_size: int
    train_size: int


@dataclass
class CvResult:
    catalog: LabelCatalog
    plan: FoldPlan
    folds: list
    aggregate: FoldAggregate

    @property
    def fold_reports(self) -> list:
        return [f.report for f in self.folds]


def run_cv(records, config: TrainConfig, k: int = 5, stopwords=frozenset(),
           plan: FoldPlan | None = None) -> CvResult:
    """Stratified k-fold cross-validation of the full pipeline.

    Per fold: the vocabulary is rebuilt from the k-1 training folds only,
    a model is trained on them, and the held-out fold is scored. Pass a
    plan computed on the full corpus to share fold assignments across
    input fields; otherwise one is derived from `records` with config.seed.
    """
    config.validate()
    catalog = build_catalog(records)
    if plan is None:
        plan = stratified_kfold(records, catalog, k, config.seed)
    elif plan.k != k:
        raise ConfigError(f"fold plan has k={plan.k}, run requested k={k}")

    outcomes = []
    for fold in range(k):
        train_records, test_records = plan.split(records, fold)
        if not train_records or not test_records:
            raise DataError(f"fold {fold} has an empty split; corpus too small for k={k}")
        token_seqs = [normalize(r.text(config.input_field), stopwords) for r in train_records]
        vocab = Vocabulary.build(token_seqs, config.min_count)
        params, history = train_fold(
            train_records, config, vocab, catalog, fold_index=fold, stopwords=stopwords
        )
        test_ids, test_labels = _encode_records(test_records, vocab, catalog, config, stopwords)
        probs = _infer_probs(params, test_ids)
        report = evaluate(probs.argmax(axis=1), test_labels, catalog)
        outcomes.append(
            FoldOutcome(
                fold=fold, report=report, history=history, vocab_size=vocab.size,
                test_size=len(test_records), train_size=len(train_records),
            )
        )
    return CvResult(
        catalog=catalog, plan=plan, folds=outcomes,
        aggregate=fold_aggregate([o.report for o in outcomes]),
    )


@dataclass
class GradCheckReport:
    """Max relative error of analytic vs central-difference gradients, per tensor."""

    max_rel_err: dict
    tolerance: float
    step: float

    @property
    def passed(self) -> bool:
        return all(err < self.tolerance for err in self.max_rel_err.values())

    def failures(self) -> list:
        return [name for name, err in self.max_rel_err.items() if err >= self.tolerance]


def grad_check(vocab_size: int = 7, embedding_dim: int = 3, seq_length: int = 4,
               hidden1: int = 5, num_classes: int = 3, batch: int = 4, seed: int = 0,
               tolerance: float = 1e-4, step: float = 1e-5,
               corrupt: dict | None = None) -> GradCheckReport:
    """Compare backprop against central finite differences on a tiny model.

    `corrupt` maps tensor name -> factor applied to the analytic gradient;
    it exists so tests can prove the harness notices a broken gradient.
    """
    rng = np.random.default_rng(seed)
    params = nn.init_params(seed, vocab_size, embedding_dim, seq_length, hidden1, num_classes)
    ids = rng.integers(0, vocab_size, size=(batch, seq_length), dtype=np.int64)
    labels = rng.integers(0, num_classes, size=batch, dtype=np.int64)

    def loss_at() -> float:
        _, cache = nn.forward(params, ids, mode="train")
        return cross_entropy(nn.log_softmax(cache.logits), labels)

    # The zero-bias init is a degenerate point: a record whose a1 row relus
    # to all zeros puts z2 exactly on the kink, where central differences
    # are meaningless. Check at a generic point instead: jitter every
    # learnable and demand each relu argument clear the kink by a margin
    # far above the probe step.
    margin = 100.0 * step
    for _ in range(50):
        for tensor in params.learnable().values():
            tensor += rng.uniform(-0.2, 0.2, size=tensor.shape)
        _, probe = nn.forward(params, ids, mode="train")
        gaps = (np.abs(probe.bn_out).min(), np.abs(probe.z2).min(), np.abs(probe.z3).min())
        if min(gaps) > margin:
            break
    else:
        raise NumericError("could not find a kink-free point for the gradient check")

    _, cache = nn.forward(params, ids, mode="train")
    grads = nn.backward(params, cache, labels).by_name()
    if corrupt:
        for name, factor in corrupt.items():
            grads[name] = grads[name] * factor

    max_rel_err = {}
    for name, tensor in params.learnable().items():
        analytic = grads[name]
        worst = 0.0
        flat = tensor.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            loss_plus = loss_at()
            flat[i] = saved - step
            loss_minus = loss_at()
            flat[i] = saved
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            a = analytic.reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-5)
            worst = max(worst, rel)
        max_rel_err[name] = worst
    return GradCheckReport(max_rel_err=max_rel_err, tolerance=tolerance, step=step)
