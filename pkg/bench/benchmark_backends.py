"""Compare the compiled kernel lane against the NumPy reference lane.

Two kinds of measurement:

- kernel microbenchmarks (fused Adam / embedding gather / scatter-add) at
  both input-length scales, with a bitwise-equality check on every output;
- an end-to-end training run per lane, executed in a subprocess with
  MEDSPECIALTY_BACKEND pinned, since the lane is chosen at import time.
  The runs must produce identical parameter digests: the lanes may differ
  only in wall clock, never in results.

Usage: python3 bench/benchmark_backends.py [--repeats N] [--epochs N] [--micro-only]
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

import numpy as np

SCALES = {"keywords": 15, "transcription": 120}
VOCAB, DIM, BATCH, HIDDEN1, CLASSES = 12000, 64, 32, 128, 40


def _param_count(seq_length: int) -> int:
    flat = seq_length * DIM
    total = VOCAB * DIM                      # embedding
    total += flat * HIDDEN1 + HIDDEN1       # dense1
    total += 2 * HIDDEN1                    # bn gamma/beta
    total += HIDDEN1 * 100 + 100            # dense2
    total += 100 * 100 + 100                # dense3
    total += 100 * CLASSES + CLASSES        # out
    return total


def _best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(lanes, repeats: int):
    """Per-kernel best-of-N seconds for each lane, checking bitwise agreement."""
    rng = np.random.default_rng(0)
    rows = []
    for field, seq_length in SCALES.items():
        ids = rng.integers(0, VOCAB, size=(BATCH, seq_length), dtype=np.int64)
        emb = rng.standard_normal((VOCAB, DIM))
        d_flat = rng.standard_normal((BATCH, seq_length * DIM))
        n = _param_count(seq_length)
        grad = rng.standard_normal(n)

        cases = {}
        cases[f"gather {field} (B={BATCH}, L={seq_length})"] = lambda k: k.embedding_gather(
            emb, ids, np.empty((BATCH, seq_length * DIM))
        )

        def scatter(k):
            k.embedding_scatter_add(np.zeros_like(emb), ids, d_flat)

        cases[f"scatter-add {field} (B={BATCH}, L={seq_length})"] = scatter

        def adam(k):
            k.adam_update(np.zeros(n), grad, np.zeros(n), np.abs(grad).copy(),
                          1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)

        cases[f"adam step {field} ({n:,} params)"] = adam

        for name, case in cases.items():
            timings = {}
            outputs = {}
            for lane, kernels in lanes.items():
                # capture the mutated arrays once for the equality check
                out = np.empty((BATCH, seq_length * DIM))
                g = np.zeros_like(emb)
                p = np.zeros(n)
                kernels.embedding_gather(emb, ids, out)
                kernels.embedding_scatter_add(g, ids, d_flat)
                kernels.adam_update(p, grad, np.zeros(n), np.abs(grad).copy(),
                                    1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)
                outputs[lane] = (out.tobytes(), g.tobytes(), p.tobytes())
                timings[lane] = _best_of(lambda: case(kernels), repeats)
            if len(outputs) == 2:
                a, b = outputs.values()
                assert a == b, f"lanes disagree on {name}"
            rows.append((name, timings))
    return rows


def _synthetic_records(seq_length: int, seed: int):
    """Class-correlated token soup, long enough to exercise the chosen L."""
    from medspecialty.corpus import Record

    rng = np.random.default_rng(seed)
    records = []
    rid = 0
    for c in range(4):
        pool = np.arange(c * 600, c * 600 + 900)  # 300 tokens shared with the next class
        for _ in range(150):
            n_tokens = seq_length + int(rng.integers(0, 8))
            toks = rng.choice(pool, size=n_tokens)
            text = " ".join(f"t{t}" for t in toks)
            records.append(Record(rid, "", f"class_{c}", "", text, text))
            rid += 1
    return records


def _train_worker(field: str, epochs: int) -> None:
    from medspecialty.backend import BACKEND
    from medspecialty.corpus import build_catalog
    from medspecialty.textprep import Vocabulary, normalize
    from medspecialty.train import TrainConfig, train_fold

    seq_length = SCALES[field]
    records = _synthetic_records(seq_length, seed=11)
    config = TrainConfig(sequence_length=seq_length, max_epochs=epochs,
                         batch_size=BATCH, seed=0)
    vocab = Vocabulary.build([normalize(r.keywords) for r in records])
    catalog = build_catalog(records)
    t0 = time.perf_counter()
    params, _ = train_fold(records, config, vocab, catalog)
    elapsed = time.perf_counter() - t0
    digest = hashlib.sha256()
    for name, tensor in sorted(params.learnable().items()):
        digest.update(name.encode())
        digest.update(tensor.tobytes())
    print(json.dumps({"backend": BACKEND, "elapsed": elapsed,
                      "digest": digest.hexdigest()}))


def bench_training(lane_names, epochs: int):
    """Run the worker once per lane in a fresh interpreter; return results."""
    results = {}
    for lane in lane_names:
        env = dict(os.environ, MEDSPECIALTY_BACKEND=lane)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__),
             "--train-worker", "keywords", "--epochs", str(epochs)],
            env=env, capture_output=True, text=True, check=True,
        )
        payload = json.loads(proc.stdout.strip().splitlines()[-1])
        assert payload["backend"] == lane, payload
        results[lane] = payload
    return results


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30,
                        help="best-of-N repeats per kernel (default 30)")
    parser.add_argument("--epochs", type=int, default=3,
                        help="epochs for the end-to-end run (default 3)")
    parser.add_argument("--micro-only", action="store_true",
                        help="skip the end-to-end training comparison")
    parser.add_argument("--train-worker", metavar="FIELD",
                        help=argparse.SUPPRESS)  # internal: run one training lane
    args = parser.parse_args(argv)

    if args.train_worker:
        _train_worker(args.train_worker, args.epochs)
        return 0

    from medspecialty.backend import get_backend

    lanes = {"reference": get_backend("reference")}
    try:
        lanes["compiled"] = get_backend("compiled")
    except ImportError:
        print("compiled extension not built; benchmarking the reference lane only\n")
    lane_names = list(lanes)

    print(f"kernel microbenchmarks (best of {args.repeats})")
    width = 46
    header = f"{'kernel':<{width}}" + "".join(f"{lane:>12}" for lane in lane_names)
    if len(lane_names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, timings in bench_kernels(lanes, args.repeats):
        line = f"{name:<{width}}"
        for lane in lane_names:
            line += f"{timings[lane] * 1e3:>10.3f}ms"
        if len(lane_names) == 2:
            line += f"{timings['reference'] / timings['compiled']:>9.2f}x"
        print(line)

    if args.micro_only or len(lane_names) < 2:
        return 0

    print(f"\nend-to-end training, 600 records, L={SCALES['keywords']}, "
          f"{args.epochs} epochs, fresh interpreter per lane")
    results = bench_training(lane_names, args.epochs)
    digests = {r["digest"] for r in results.values()}
    for lane in lane_names:
        print(f"{lane:<12}{results[lane]['elapsed']:>8.2f}s")
    speedup = results["reference"]["elapsed"] / results["compiled"]["elapsed"]
    print(f"speedup {speedup:.2f}x; parameter digests "
          + ("identical" if len(digests) == 1 else "DIFFER"))
    if len(digests) != 1:
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
