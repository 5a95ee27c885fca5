"""Command-line frontend: encode, train, eval, compare, sweep-dim.

Exit status is 0 on success, 1 on data/runtime errors and 2 on usage errors.
The encoded-data cache lives in ``$BINHDC_CACHE_DIR`` (default
``~/.cache/binhdc``).
"""

import argparse
import json
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import data_io, train_classic, train_lehdc
from .classifier import evaluate
from .encoder import build_item_memory, encode_dataset, fit_stats
from .kernels import BACKEND_NAME
from .metrics import EpochRecord, RunMetrics, describe_version

STRATEGIES = ("baseline", "retrain", "retrain-enhanced", "lehdc")
IMAGE_FORMATS = ("idx", "cifar")

_SENSOR_ROW = dict(weight_decay=0.05, learning_rate=0.01, batch_size=64, dropout_rate=0.5, epochs=100)
PRESETS = {
    "mnist": dict(weight_decay=0.05, learning_rate=0.01, batch_size=64, dropout_rate=0.5, epochs=100),
    "fashion-mnist": dict(weight_decay=0.03, learning_rate=0.1, batch_size=256, dropout_rate=0.3, epochs=200),
    "cifar10": dict(weight_decay=0.03, learning_rate=0.001, batch_size=512, dropout_rate=0.3, epochs=200),
    "ucihar": _SENSOR_ROW,
    "isolet": _SENSOR_ROW,
    "pamap": _SENSOR_ROW,
}


class Refusal(Exception):
    """Inputs are well-formed but incompatible (e.g. model vs data metadata)."""


# --------------------------------------------------------------- argparse

def positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def positive_int_list(text):
    vals = int_list(text)
    if any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"all values must be positive, got {text!r}")
    return vals


def strategy_list(text):
    vals = [t.strip() for t in text.split(",") if t.strip()]
    bad = [v for v in vals if v not in STRATEGIES]
    if bad or not vals:
        raise argparse.ArgumentTypeError(f"unknown strategy {bad or text!r}; choose from {', '.join(STRATEGIES)}")
    return vals


def _add_data_flags(p, required=True):
    g = p.add_argument_group("dataset")
    g.add_argument("--format", choices=("idx", "csv", "cifar", "ucihar", "isolet", "synthetic"),
                   required=required, help="input format")
    g.add_argument("--train", nargs="+", metavar="PATH",
                   help="training data (idx: images labels; cifar: batch files; ucihar: dataset root)")
    g.add_argument("--test", nargs="+", metavar="PATH", help="test data, same layout as --train")
    g.add_argument("--label-column", type=int, default=-1)
    g.add_argument("--header", action="store_true", help="csv: skip the first line")
    g.add_argument("--delimiter", default=",", help="csv delimiter; 'ws' for whitespace")
    g.add_argument("--synthetic", default="4:32:50:0.35", metavar="K:N:PER_CLASS:NOISE",
                   help="synthetic blob parameters")


def _add_encoder_flags(p, dims=True):
    if dims:
        p.add_argument("--dim", type=positive_int, default=10000)
    p.add_argument("--levels", type=positive_int, default=None,
                   help="quantization levels (default 256 for image formats, 64 otherwise)")
    p.add_argument("--seed", type=int, default=None, help="encoder and trainer seed (default 0)")
    p.add_argument("--jobs", type=positive_int, default=1, help="worker threads")
    p.add_argument("--no-cache", action="store_true", help="do not read or write the encoded cache")


def _add_train_flags(p):
    g = p.add_argument_group("retraining")
    g.add_argument("--alpha", type=float, default=0.05)
    g.add_argument("--alpha-first", type=float, default=1.5)
    g.add_argument("--max-epochs", type=positive_int, default=150)
    g.add_argument("--select", choices=("best", "last"), default="best")
    g.add_argument("--epoch-rebinarize", action="store_true",
                   help="re-binarize once per epoch instead of after every update")
    g = p.add_argument_group("lehdc")
    g.add_argument("--preset", choices=sorted(PRESETS), help="hyper-parameter row")
    g.add_argument("--weight-decay", type=float)
    g.add_argument("--lr", type=float)
    g.add_argument("--batch-size", type=positive_int)
    g.add_argument("--dropout", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr-decay", type=float)
    g.add_argument("--val-fraction", type=float)
    g.add_argument("--init", choices=("warm", "cold"))


def build_parser():
    parser = argparse.ArgumentParser(prog="binhdc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=describe_version())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a dataset and write the cache")
    _add_data_flags(p)
    _add_encoder_flags(p)
    p.add_argument("--out", type=Path, help="cache file (default: cache dir / content hash)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train one strategy")
    _add_data_flags(p, required=False)
    _add_encoder_flags(p)
    p.add_argument("--encoded", type=Path, help="read an encoded cache instead of raw data")
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    _add_train_flags(p)
    p.add_argument("--model-out", type=Path)
    p.add_argument("--metrics-out", type=Path, help="JSONL records; a .csv table is written alongside")
    p.add_argument("--print-config", action="store_true", help="echo the resolved config and exit")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("--model", type=Path, required=True)
    _add_data_flags(p, required=False)
    p.add_argument("--encoded", type=Path)
    p.add_argument("--split", choices=("train", "test"), default=None,
                   help="which part to score (default: test when present)")
    p.add_argument("--dim", type=positive_int)
    p.add_argument("--levels", type=positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=positive_int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="mean/std accuracy per strategy over seeds")
    _add_data_flags(p)
    _add_encoder_flags(p)
    p.add_argument("--strategies", type=strategy_list, default=["baseline", "retrain", "lehdc"])
    p.add_argument("--seeds", type=int_list, default=[0])
    _add_train_flags(p)
    p.add_argument("--out", type=Path, help="JSONL records")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep-dim", help="accuracy against hypervector dimension")
    _add_data_flags(p)
    _add_encoder_flags(p, dims=False)
    p.add_argument("--dims", type=positive_int_list, required=True)
    p.add_argument("--strategies", type=strategy_list, default=["baseline", "retrain", "lehdc"])
    _add_train_flags(p)
    p.add_argument("--out", type=Path, help="JSONL records; a .csv table is written alongside")
    p.set_defaults(func=cmd_sweep_dim)
    return parser


# ---------------------------------------------------------------- helpers

def _delimiter(args):
    return None if args.delimiter in ("ws", "whitespace", "") else args.delimiter


def load_data(args):
    """Return ``(train, test_or_None, default_levels)``."""
    fmt = args.format
    if fmt is None:
        raise Refusal("a dataset (--format/--train) or --encoded cache is required")
    if fmt == "synthetic":
        try:
            k, n, per, noise = args.synthetic.split(":")
            ds = data_io.make_synthetic(int(k), int(n), int(per), float(noise), seed=args.seed)
        except ValueError:
            raise Refusal(f"bad --synthetic value {args.synthetic!r}") from None
        train, test = data_io.split(ds, 0.25, True, args.seed)
        return train, test, 64
    if not args.train:
        raise Refusal(f"--train is required for --format {fmt}")
    levels = 256 if fmt in IMAGE_FORMATS else 64
    if fmt == "idx":
        if len(args.train) != 2 or (args.test and len(args.test) != 2):
            raise Refusal("idx format takes two paths: images labels")
        train = data_io.load_idx(*args.train)
        test = data_io.load_idx(*args.test) if args.test else None
    elif fmt == "cifar":
        train = data_io.load_cifar(args.train)
        test = data_io.load_cifar(args.test) if args.test else None
    elif fmt == "ucihar":
        root = args.train[0]
        train = data_io.load_ucihar(root, "train")
        test = data_io.load_ucihar(args.test[0] if args.test else root, "test", train.class_names)
    else:
        kw = dict(label_column=args.label_column, has_header=args.header, delimiter=_delimiter(args))
        train = data_io.load_csv(args.train[0], **kw)
        test = data_io.load_csv(args.test[0], class_names=train.class_names, **kw) if args.test else None
    return train, test, levels


def encode_all(train, test, dim, levels, seed, jobs=1, use_cache=True, out=None, log=None):
    """Encode train/test with one item memory; returns ``(EncodedCache, hit)``."""
    key = data_io.cache_key([train, test], dim, levels, seed)
    path = out
    if path is None and use_cache:
        path = data_io.default_cache_dir() / f"{key}.npz"
    if path is not None and Path(path).exists():
        try:
            cached = data_io.load_encoded(path)
            if cached.key == key:
                return cached, True
        except data_io.FormatError as exc:
            if log:
                log(f"ignoring unreadable cache {path}: {exc}")
    k = max(train.n_classes, test.n_classes if test is not None else 0)
    im = build_item_memory(dim, train.n_features, levels, fit_stats(train), seed)
    enc_train = encode_dataset(train, im, seed, n_jobs=jobs, n_classes=k)
    enc_test = None
    if test is not None:
        ids = np.arange(len(train), len(train) + len(test))
        enc_test = encode_dataset(test, im, seed, n_jobs=jobs, sample_ids=ids, n_classes=k)
    cache = data_io.EncodedCache(key, enc_train, im, enc_test, train.class_names)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        data_io.save_encoded(path, key, enc_train, im, enc_test, train.class_names)
    return cache, False


def retrain_config(args, seed):
    return train_classic.RetrainConfig(
        alpha=args.alpha, alpha_first_epoch=args.alpha_first, max_epochs=args.max_epochs,
        seed=seed, online=not args.epoch_rebinarize, select=args.select,
    )


def lehdc_config(args, seed, dataset_hint=None):
    base = dict(PRESETS.get(args.preset or dataset_hint or "", {}))
    overrides = {
        "weight_decay": args.weight_decay, "learning_rate": args.lr, "batch_size": args.batch_size,
        "dropout_rate": args.dropout, "epochs": args.epochs, "lr_decay_factor": args.lr_decay,
        "validation_fraction": args.val_fraction, "init": args.init,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    return train_lehdc.LeHDCConfig(seed=seed, **base)


def _dataset_hint(args):
    return {"ucihar": "ucihar", "isolet": "isolet", "cifar": "cifar10"}.get(getattr(args, "format", None))


def _metadata(cache, strategy):
    im = cache.item_memory
    return {
        "strategy": strategy, "dim": im.dim, "n_features": im.n_features, "n_levels": im.n_levels,
        "encoder_seed": im.seed, "class_names": cache.class_names,
    }


def run_strategy(strategy, cache, args, seed, log=None):
    """Train one strategy; returns ``(model, metrics, latent_or_None)``."""
    train, test = cache.train, cache.test
    k = train.n_classes
    meta = _metadata(cache, strategy)
    t0 = time.perf_counter()
    if strategy == "lehdc":
        cfg = lehdc_config(args, seed, _dataset_hint(args))
        model, metrics, weights = train_lehdc.train(train, k, cfg, eval_data=test, metadata=meta, log=log)
        latent = weights.latent
    else:
        base_model, nb = train_classic.train_baseline(train, k, seed)
        latent = None
        if strategy == "baseline":
            model = base_model
            model.metadata.update(meta)
            metrics = RunMetrics("baseline", config={"seed": seed}, seeds={"tie_break": seed})
            metrics.add(EpochRecord(
                epoch=1, train_acc=evaluate(train, model).accuracy,
                val_acc=evaluate(test, model).accuracy if test is not None else None,
                wall_ms=(time.perf_counter() - t0) * 1e3,
            ))
            metrics.best_epoch = 1
        else:
            fn = train_classic.retrain if strategy == "retrain" else train_classic.retrain_enhanced
            model, metrics, _ = fn(train, nb, retrain_config(args, seed), eval_data=test, metadata=meta)
    if test is not None:
        metrics.test_acc = evaluate(test, model).accuracy
    metrics.seeds["encoder"] = cache.item_memory.seed
    metrics.config["encoder"] = {"dim": cache.item_memory.dim, "levels": cache.item_memory.n_levels}
    metrics.config["kernels"] = BACKEND_NAME
    return model, metrics, latent


def _table_path(path):
    return Path(path).with_suffix(".csv")


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


# --------------------------------------------------------------- commands

def cmd_encode(args):
    train, test, default_levels = load_data(args)
    levels = args.levels or default_levels
    t0 = time.perf_counter()
    cache, hit = encode_all(train, test, args.dim, levels, args.seed, args.jobs,
                            use_cache=not args.no_cache, out=args.out, log=_log)
    elapsed = time.perf_counter() - t0
    n_test = len(cache.test) if cache.test is not None else 0
    print(f"{'cache hit' if hit else 'encoded'}: D={args.dim} N={train.n_features} Q={levels} "
          f"L={len(cache.train)} test={n_test} key={cache.key} elapsed={elapsed:.2f}s")
    return 0


def _cache_for(args):
    if getattr(args, "encoded", None) is not None:
        cache = data_io.load_encoded(args.encoded)
        im = cache.item_memory
        if args.levels is not None and args.levels != im.n_levels:
            raise Refusal(f"--levels {args.levels} does not match the encoded cache ({im.n_levels})")
        if args.seed is not None and args.seed != im.seed:
            raise Refusal(f"--seed {args.seed} does not match the encoded cache ({im.seed})")
        args.seed = im.seed
        return cache
    train, test, default_levels = load_data(args)
    cache, _ = encode_all(train, test, args.dim, args.levels or default_levels, args.seed,
                          args.jobs, use_cache=not args.no_cache, log=_log)
    return cache


def cmd_train(args):
    if args.print_config:
        args.seed = 0 if args.seed is None else args.seed
        if args.strategy == "lehdc":
            cfg = asdict(lehdc_config(args, args.seed, _dataset_hint(args)))
        elif args.strategy == "baseline":
            cfg = {"seed": args.seed}
        else:
            cfg = asdict(retrain_config(args, args.seed))
        print(json.dumps({"strategy": args.strategy, "preset": args.preset, "config": cfg}))
        return 0
    cache = _cache_for(args)
    log = (lambda r: _log(f"epoch {r.epoch}: loss={r.train_loss:.4f} train={r.train_acc:.4f} "
                          f"val={r.val_acc} lr={r.lr}")) if args.strategy == "lehdc" else None
    model, metrics, latent = run_strategy(args.strategy, cache, args, args.seed, log=log)
    if args.model_out:
        data_io.save_model(model, args.model_out, latent=latent, item_memory=cache.item_memory)
    if args.metrics_out:
        metrics.write_jsonl(args.metrics_out)
        metrics.write_table(_table_path(args.metrics_out))
    test = f" test_acc={metrics.test_acc * 100:.2f}%" if metrics.test_acc is not None else ""
    print(f"{args.strategy}: epochs={len(metrics.epochs)} "
          f"train_acc={metrics.final_train_acc * 100:.2f}%{test}")
    return 0


def _check_meta(loaded, field, want, have):
    if want is not None and have is not None and want != have:
        raise Refusal(f"model {field}={have} does not match data {field}={want}")


def cmd_eval(args):
    loaded = data_io.load_model(args.model)
    model = loaded.model
    _check_meta(loaded, "dim", args.dim, model.dim)
    _check_meta(loaded, "n_levels", args.levels, loaded.n_levels or None)
    _check_meta(loaded, "encoder_seed", args.seed, loaded.encoder_seed if loaded.n_levels else None)
    if args.seed is None:
        args.seed = loaded.encoder_seed
    if args.encoded is not None:
        cache = data_io.load_encoded(args.encoded)
        im = cache.item_memory
        _check_meta(loaded, "dim", im.dim, model.dim)
        _check_meta(loaded, "n_features", im.n_features, loaded.n_features or None)
        _check_meta(loaded, "n_levels", im.n_levels, loaded.n_levels or None)
        _check_meta(loaded, "encoder_seed", im.seed, loaded.encoder_seed if loaded.n_levels else None)
        part = args.split or ("test" if cache.test is not None else "train")
        data = cache.test if part == "test" else cache.train
        if data is None:
            raise Refusal("the encoded cache has no test part")
    else:
        if loaded.item_memory is None:
            raise Refusal("model file carries no item memory; pass --encoded instead")
        train, test, _ = load_data(args)
        part = args.split or ("test" if test is not None else "train")
        raw = test if part == "test" else train
        if raw is None:
            raise Refusal("no test data given")
        _check_meta(loaded, "n_features", raw.n_features, loaded.item_memory.n_features)
        offset = len(train) if part == "test" else 0
        data = encode_dataset(raw, loaded.item_memory, loaded.item_memory.seed, n_jobs=args.jobs,
                              sample_ids=np.arange(offset, offset + len(raw)), n_classes=model.n_classes)
    result = evaluate(data, model)
    print(f"accuracy: {result.accuracy * 100:.2f}% ({result.correct}/{result.total}) on {part}")
    print(format_confusion(result.confusion))
    print(json.dumps({"type": "eval", "split": part, "accuracy": result.accuracy,
                      "confusion": result.confusion.tolist()}))
    return 0


def format_confusion(confusion):
    k = confusion.shape[0]
    width = max(len(str(int(confusion.max()))), len(str(k - 1)), 4)
    head = "true\\pred".rjust(width + 5) + " " + " ".join(str(j).rjust(width) for j in range(k))
    lines = [head]
    for i in range(k):
        lines.append(str(i).rjust(width + 5) + " " + " ".join(str(int(v)).rjust(width) for v in confusion[i]))
    return "\n".join(lines)


class _Sink:
    """Serialized writer for records produced by worker threads."""

    def __init__(self, path=None):
        self._lock = threading.Lock()
        self._fh = open(path, "w") if path is not None else None
        self.records = []

    def write(self, rec):
        with self._lock:
            self.records.append(rec)
            if self._fh is not None:
                self._fh.write(json.dumps(rec) + "\n")
                self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()


def _run_cells(cells, fn, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def cmd_compare(args):
    train, test, default_levels = load_data(args)
    if test is None:
        raise Refusal("compare needs test data (--test)")
    levels = args.levels or default_levels
    sink = _Sink(args.out)
    caches = {}
    for seed in args.seeds:
        caches[seed], _ = encode_all(train, test, args.dim, levels, seed, args.jobs,
                                     use_cache=not args.no_cache, log=_log)

    def cell(c):
        strategy, seed = c
        _, metrics, _ = run_strategy(strategy, caches[seed], args, seed)
        rec = {"type": "run", "strategy": strategy, "seed": seed, "dim": args.dim,
               "test_acc": metrics.test_acc, "train_acc": metrics.final_train_acc,
               "epochs": len(metrics.epochs)}
        sink.write(rec)
        return rec

    cells = [(s, seed) for s in args.strategies for seed in args.seeds]
    try:
        results = _run_cells(cells, cell, args.jobs)
        rows = summarize(results, args.strategies)
        for row in rows:
            sink.write(dict(type="summary", **row))
    finally:
        sink.close()
    print(format_compare(rows, train_name=args.format))
    return 0


def summarize(results, strategies):
    rows = []
    for s in strategies:
        accs = np.array([r["test_acc"] for r in results if r["strategy"] == s]) * 100
        rows.append({"strategy": s, "n": len(accs), "mean": float(accs.mean()), "std": float(accs.std())})
    return rows


def format_compare(rows, train_name=""):
    names = {"baseline": "Baseline Binary HDC", "retrain": "Retraining",
             "retrain-enhanced": "Enhanced retraining", "lehdc": "LeHDC"}
    width = max(len(names[r["strategy"]]) for r in rows) + 2
    lines = [f"{'strategy':<{width}}{train_name} accuracy (%)", "-" * (width + 24)]
    for r in rows:
        lines.append(f"{names[r['strategy']]:<{width}}{r['mean']:.2f} +/- {r['std']:.2f}  (n={r['n']})")
    return "\n".join(lines)


def cmd_sweep_dim(args):
    train, test, default_levels = load_data(args)
    if test is None:
        raise Refusal("sweep-dim needs test data (--test)")
    levels = args.levels or default_levels
    for d in args.dims:
        if d < levels:
            raise Refusal(f"dim {d} is below the number of levels {levels}")
    sink = _Sink(args.out)
    caches = {}
    for d in args.dims:
        caches[d], _ = encode_all(train, test, d, levels, args.seed + d, args.jobs,
                                  use_cache=not args.no_cache, log=_log)

    def cell(c):
        d, strategy = c
        _, metrics, _ = run_strategy(strategy, caches[d], args, args.seed + d)
        rec = {"type": "sweep", "dim": d, "strategy": strategy, "seed": args.seed + d,
               "accuracy": metrics.test_acc}
        sink.write(rec)
        return rec

    cells = [(d, s) for d in args.dims for s in args.strategies]
    try:
        results = _run_cells(cells, cell, args.jobs)
    finally:
        sink.close()
    results.sort(key=lambda r: (r["dim"], STRATEGIES.index(r["strategy"])))
    if args.out:
        with _table_path(args.out).open("w") as fh:
            fh.write("dim,strategy,accuracy\n")
            for r in results:
                fh.write(f"{r['dim']},{r['strategy']},{float(r['accuracy'])!r}\n")
    for r in results:
        print(f"D={r['dim']:>6} {r['strategy']:<17} {r['accuracy'] * 100:.2f}%")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("encode", "compare", "sweep-dim") and args.seed is None:
        args.seed = 0
    if args.command == "train" and args.encoded is None and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except Refusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 1
    except (data_io.FormatError, ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
