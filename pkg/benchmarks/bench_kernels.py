"""Timing comparison of the pure-NumPy and compiled kernel backends.

Runs each hot kernel (negative sampling, row scatter-add, fused Adam)
and one full training epoch under both backends and prints a table of
median wall times. The two backends are bit-identical, so this is purely
a throughput measurement.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat 5] [--slots 200000]
"""

import argparse
import statistics
import time

import numpy as np

from ncrank import kernels
from ncrank.data import RawInteraction, filter_and_remap, leave_one_out_split
from ncrank.models import NbprModel
from ncrank.rng import Rng
from ncrank.trainer import TrainConfig, train


def timed(fn, repeat):
    """Median wall time of fn() over `repeat` runs (after one warmup)."""
    fn()
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def make_csr(m, n, per_user, seed):
    """Synthetic sorted CSR membership: `per_user` items for each of m users."""
    prng = np.random.default_rng(seed)
    rows = [np.sort(prng.choice(n, per_user, replace=False)) for _ in range(m)]
    offsets = np.zeros(m + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(r) for r in rows])
    return offsets, np.concatenate(rows).astype(np.int64)


def bench_sampler(slots, repeat):
    m, n, per_user = 2000, 5000, 40
    offsets, items = make_csr(m, n, per_user, seed=1)
    users = np.random.default_rng(2).integers(0, m, slots).astype(np.int64)
    key, start = Rng(7).reserve(kernels.ATTEMPTS * slots)

    def run():
        kernels.sample_negatives(key, start, users, offsets, items, n)

    return timed(run, repeat)


def bench_scatter(repeat):
    prng = np.random.default_rng(3)
    out = np.zeros((4096, 64))
    rows = prng.integers(0, 4096, 100_000).astype(np.int64)
    contrib = prng.normal(size=(100_000, 64))

    def run():
        kernels.scatter_add_rows(out, rows, contrib)

    return timed(run, repeat)


def bench_adam(repeat):
    prng = np.random.default_rng(4)
    size = 2_000_000
    param = prng.normal(size=size)
    grad = prng.normal(size=size)
    m = np.zeros(size)
    v = np.zeros(size)

    def run():
        kernels.adam_update(param, grad, m, v, 0.001, 0.9, 0.999, 1e-8, 0.5)

    return timed(run, repeat)


def bench_epoch(repeat):
    prng = np.random.default_rng(5)
    raw = []
    for u in range(500):
        for t, it in enumerate(prng.choice(200, 20, replace=False)):
            raw.append(RawInteraction(f"u{u:03d}", f"i{int(it):03d}", t))
    split = leave_one_out_split(filter_and_remap(raw, 1))
    cfg = TrainConfig(lr=0.001, batch=256, ratio=1, max_epochs=1,
                      seed=0, plateau=0.001)

    def run():
        train(NbprModel(split.train.m, split.train.n, 16, seed=0), split, cfg)

    return timed(run, repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5,
                    help="timed runs per measurement (median reported)")
    ap.add_argument("--slots", type=int, default=200_000,
                    help="negative-sampling slots per run")
    args = ap.parse_args()

    benches = [
        ("sample_negatives", lambda: bench_sampler(args.slots, args.repeat)),
        ("scatter_add_rows", lambda: bench_scatter(args.repeat)),
        ("adam_update", lambda: bench_adam(args.repeat)),
        ("train epoch (nbpr)", lambda: bench_epoch(args.repeat)),
    ]

    backends = ["pure"]
    try:
        prev = kernels.set_backend("native")
        kernels.set_backend(prev)
        backends.append("native")
    except (ImportError, ValueError):
        print("compiled backend unavailable; timing pure backend only\n")

    results = {}
    for backend in backends:
        prev = kernels.set_backend(backend)
        try:
            for name, fn in benches:
                results[(name, backend)] = fn()
        finally:
            kernels.set_backend(prev)

    width = max(len(name) for name, _ in benches)
    header = f"{'kernel':<{width}}  {'pure':>10}"
    if "native" in backends:
        header += f"  {'native':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, _ in benches:
        pure_t = results[(name, "pure")]
        line = f"{name:<{width}}  {pure_t * 1e3:>8.2f}ms"
        if "native" in backends:
            native_t = results[(name, "native")]
            line += f"  {native_t * 1e3:>8.2f}ms  {pure_t / native_t:>7.2f}x"
        print(line)


if __name__ == "__main__":
    main()
