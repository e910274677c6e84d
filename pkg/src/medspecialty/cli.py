"""Command line interface.

Subcommands:
    inspect      corpus record/class counts
    cv           stratified k-fold training and evaluation, with artifacts
    train-final  train on the full corpus and save a model file
    predict      classify one text with a saved model
    serve        HTTP service around a saved model

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric or
internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, nn
from .backend import BACKEND
from .config import build_config, coerce
from .corpus import (
    build_catalog,
    class_histogram,
    drop_missing,
    load_corpus,
    stratified_kfold,
)
from .errors import ConfigError, DataError, MedSpecialtyError, NumericError
from .inference import payload_json, predict_ranked
from .metrics import SUMMARY_METRICS, format_mean_std
from .reports import write_run_outputs
from .textprep import Vocabulary, default_stopwords_path, load_stopwords, normalize
from .train import run_cv, train_fold


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="flat key = value config file")
    parser.add_argument("--data", metavar="CSV", help="corpus csv path")
    parser.add_argument("--output-dir", metavar="DIR", help="artifact directory")
    parser.add_argument("--input-field", choices=("keywords", "transcription"))
    parser.add_argument("--folds", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--max-epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--sequence-length", type=int)
    parser.add_argument("--min-count", type=int)
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )


_FLAG_TO_KEY = {
    "data": "data_path",
    "output_dir": "output_dir",
    "input_field": "input_field",
    "folds": "folds",
    "seed": "seed",
    "max_epochs": "max_epochs",
    "batch_size": "batch_size",
    "sequence_length": "sequence_length",
    "min_count": "min_count",
}


def _config_from_args(args) -> "PipelineConfig":
    overrides = {}
    for raw in args.set:
        key, sep, value = raw.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {raw!r}")
        overrides[key.strip()] = coerce(key.strip(), value)
    for attr, key in _FLAG_TO_KEY.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    return build_config(args.config, overrides)


def _load_stopword_set(config):
    path = config.stopwords_path or default_stopwords_path()
    return load_stopwords(path)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def cmd_inspect(args) -> int:
    config = _config_from_args(args)
    records = load_corpus(config.data_path)
    histogram = class_histogram(records)
    print(f"records: {len(records)}")
    print(f"classes: {len(histogram)}")
    ordered = sorted(histogram.items(), key=lambda kv: (-kv[1], kv[0]))
    for label, count in ordered:
        print(f"{label} {count}")
    top10 = sum(count for _, count in ordered[:10])
    print(f"top10_share: {top10 / len(records):.4f}")
    print(f"other_share: {(len(records) - top10) / len(records):.4f}")
    return 0


def _cleanup_outputs(out_dir: Path, k: int) -> None:
    names = [f"fold_{i}.csv" for i in range(k)]
    names += ["aggregate.csv", "folds.csv", "report.md", "run_meta.json"]
    for name in names:
        try:
            (out_dir / name).unlink(missing_ok=True)
        except OSError:
            pass


def cmd_cv(args) -> int:
    config = _config_from_args(args)
    started = _utc_now()
    t0 = time.monotonic()
    stopwords = _load_stopword_set(config)
    corpus = load_corpus(config.data_path)
    # fold assignment comes from the full corpus so keyword and
    # transcription runs with one seed land every record in the same fold
    full_catalog = build_catalog(corpus)
    plan = stratified_kfold(corpus, full_catalog, config.folds, config.seed)
    records = drop_missing(corpus, config.input_field)
    result = run_cv(records, config.train_config(), k=config.folds,
                    stopwords=stopwords, plan=plan)

    out_dir = Path(config.output_dir) / config.input_field
    meta = {
        "started_at": started,
        "finished_at": _utc_now(),
        "duration_seconds": round(time.monotonic() - t0, 3),
        "backend": BACKEND,
        "version": __version__,
        "records_total": len(corpus),
        "records_used": len(records),
        "classes_used": len(result.catalog),
        "config": {k: v for k, v in asdict(config).items()},
    }
    try:
        write_run_outputs(out_dir, config, result, stopwords, meta)
    except BaseException:
        _cleanup_outputs(out_dir, config.folds)
        raise

    print(f"input_field: {config.input_field}")
    print(f"records used: {len(records)} of {len(corpus)}")
    print(f"classes: {len(result.catalog)}")
    for name in SUMMARY_METRICS:
        mean, std = result.aggregate.stats[name]
        print(f"{name}: {format_mean_std(mean, std)}")
    print(f"wrote: {out_dir}")
    return 0


def cmd_train_final(args) -> int:
    config = _config_from_args(args)
    stopwords = _load_stopword_set(config)
    corpus = load_corpus(config.data_path)
    records = drop_missing(corpus, config.input_field)
    if not records:
        raise DataError(f"no records with a non-empty {config.input_field} field")
    catalog = build_catalog(records)
    train_config = config.train_config()
    token_seqs = [normalize(r.text(config.input_field), stopwords) for r in records]
    vocab = Vocabulary.build(token_seqs, config.min_count)
    params, history = train_fold(records, train_config, vocab, catalog,
                                 fold_index=0, stopwords=stopwords)
    model_path = Path(args.model_out) if args.model_out else Path(config.output_dir) / "model.json"
    model_path.parent.mkdir(parents=True, exist_ok=True)
    hyperparams = {
        "input_field": config.input_field,
        "embedding_dim": train_config.embedding_dim,
        "seq_length": train_config.resolved_length,
        "hidden1": train_config.hidden1,
        "min_count": config.min_count,
        "seed": config.seed,
        "bn_eps": train_config.bn_eps,
        "bn_momentum": train_config.bn_momentum,
    }
    nn.save_model(params, vocab, catalog, hyperparams, model_path, stopwords=stopwords)
    print(f"records used: {len(records)}")
    print(f"stopped epoch: {history.stopped_epoch} (best {history.best_epoch})")
    print(f"saved: {model_path}")
    return 0


def cmd_predict(args) -> int:
    model = nn.load_model(args.model)
    text = args.text if args.text is not None else sys.stdin.read()
    ranked = predict_ranked(model, text, top_k=args.top_k)
    print(payload_json(ranked))
    return 0


def cmd_serve(args) -> int:
    from .server import make_server  # keep http imports off the training path

    model = nn.load_model(args.model)
    server = make_server(model, args.host, args.port)
    host, port = server.server_address[:2]
    print(f"listening on {host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medspecialty",
        description="medical specialty classification over clinical text",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="print corpus record and class counts")
    _add_config_flags(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("cv", help="run stratified k-fold cross-validation")
    _add_config_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("train-final", help="train on the full corpus and save a model")
    _add_config_flags(p)
    p.add_argument("--model-out", metavar="FILE", help="model file path")
    p.set_defaults(func=cmd_train_final)

    p = sub.add_parser("predict", help="classify one text with a saved model")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--text", help="input text; stdin when omitted")
    p.add_argument("--top-k", type=int, default=3)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("serve", help="serve a saved model over http")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except MedSpecialtyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # anything unexpected maps to the internal code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
