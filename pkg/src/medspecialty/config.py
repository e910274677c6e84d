"""Pipeline configuration: defaults, config-file parsing, CLI overrides.

The on-disk format is deliberately flat: one `key = value` per line,
blank lines and `#` comments ignored. No sections, no nesting, no
surprises when diffing two run configs.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .train import TrainConfig


@dataclass(frozen=True)
class PipelineConfig:
    """One run end to end: data location, split scheme, training knobs."""

    data_path: str = "data/mtsamples.csv"
    output_dir: str = "runs"
    input_field: str = "keywords"
    folds: int = 5
    seed: int = 0
    sequence_length: int | None = None  # None picks 15 (keywords) or 120 (transcription)
    max_epochs: int = 200
    patience: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    validation_fraction: float = 0.1
    min_delta: float = 1e-6
    embedding_dim: int = 64
    hidden1: int = 128
    min_count: int = 1
    stopwords_path: str | None = None  # None uses the packaged list

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            input_field=self.input_field,
            sequence_length=self.sequence_length,
            max_epochs=self.max_epochs,
            patience=self.patience,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            validation_fraction=self.validation_fraction,
            min_delta=self.min_delta,
            seed=self.seed,
            embedding_dim=self.embedding_dim,
            hidden1=self.hidden1,
            min_count=self.min_count,
        ).validate()


_OPTIONAL_INT = {"sequence_length"}
_OPTIONAL_STR = {"stopwords_path"}
_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def known_keys() -> tuple:
    return tuple(sorted(_FIELD_TYPES))


def coerce(key: str, raw: str):
    """Parse one config value by the key's declared type."""
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}; known keys: {', '.join(known_keys())}")
    text = raw.strip()
    if key in _OPTIONAL_INT or key in _OPTIONAL_STR:
        if text.lower() in ("", "none"):
            return None
        if key in _OPTIONAL_STR:
            return text
        # falls through to the int path below
    base = _FIELD_TYPES[key]
    try:
        if key in _OPTIONAL_INT or base in ("int", int):
            return int(text, 10)
        if base in ("float", float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from exc
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse `key = value` lines into a typed override dict."""
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key in overrides:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        overrides[key] = coerce(key, raw)
    return overrides


def load_config_file(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    return parse_config_text(text, source=str(p))


def build_config(config_path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then the config file, then explicit overrides, in that order."""
    merged = {}
    if config_path is not None:
        merged.update(load_config_file(config_path))
    for key, value in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = value
    config = replace(PipelineConfig(), **merged)
    config.train_config()  # sanity-check training knobs up front
    if config.folds < 2:
        raise ConfigError(f"folds must be >= 2, got {config.folds}")
    return config
