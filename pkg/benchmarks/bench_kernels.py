"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--dim 10000] [--repeat 5]

Each kernel is run on identical inputs through both backends, the outputs
are checked for equality and the best-of-N wall time is reported.
"""

import argparse
import time

import numpy as np

from binhdc import kernels
from binhdc.hv import n_words


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(dim, rng):
    w = n_words(dim)
    queries = rng.integers(0, 2**63, size=(2000, w), dtype=np.uint64)
    classes = rng.integers(0, 2**63, size=(26, w), dtype=np.uint64)
    n_feat, n_lvl, batch = 617, 64, 256
    levels = rng.integers(0, n_lvl, size=(batch, n_feat)).astype(np.intp)
    pos = rng.choice(np.array([-1, 1], dtype=np.int8), size=(n_feat, dim))
    lvl = rng.choice(np.array([-1, 1], dtype=np.int8), size=(n_lvl, dim))
    labels = rng.integers(0, 26, size=2000).astype(np.intp)
    return {
        "xor_popcount 2000x26": lambda b: b.xor_popcount(queries, classes),
        f"encode_counts {batch}x{n_feat}": lambda b: b.encode_counts(levels, pos, lvl),
        "class_bit_counts 2000": lambda b: b.class_bit_counts(queries, labels, 26, dim),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=10_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    names = sorted(backends)
    print(f"D={args.dim}, best of {args.repeat}; backends: {', '.join(names)}")
    header = f"{'kernel':<26}" + "".join(f"{n + ' (ms)':>16}" for n in names)
    if "compiled" in backends:
        header += f"{'speedup':>10}"
    print(header)
    for label, run in cases(args.dim, np.random.default_rng(args.seed)).items():
        timings, outputs = {}, {}
        for n in names:
            timings[n], outputs[n] = best_time(lambda: run(backends[n]), args.repeat)
        ref = outputs[names[0]]
        for n in names[1:]:
            if not np.array_equal(ref, outputs[n]):
                raise SystemExit(f"{label}: backends disagree")
        line = f"{label:<26}" + "".join(f"{timings[n] * 1e3:>16.2f}" for n in names)
        if "compiled" in backends:
            line += f"{timings['python'] / timings['compiled']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
