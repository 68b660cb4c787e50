#!/usr/bin/env python3
"""Benchmark the jitted kernels against their numpy/pure fallbacks.

Runs each hot kernel in both flavors on identical inputs and prints a
speedup table. JIT warm-up happens outside the timed region.

    python3 benchmarks/bench_kernels.py [--samples 2000000] [--n 192]
"""

import argparse
import sys
import time

import numpy as np

sys.path.insert(0, "src")

from mperf import kernels  # noqa: E402


def timeit(fn, *args, repeat=3):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_run_deltas(n_samples, rng):
    gids = rng.integers(0, 16, size=n_samples).astype(np.int64)
    values = np.cumsum(rng.integers(0, 10_000, size=n_samples), dtype=np.uint64)
    rows = []
    t_np, ref = timeit(kernels._run_deltas_np, gids, values, 16)
    rows.append(("run_deltas", "numpy", t_np))
    if kernels.HAVE_NUMBA:
        kernels._run_deltas_jit(gids[:16], values[:16], 16)  # warm-up
        t_jit, got = timeit(kernels._run_deltas_jit, gids, values, 16)
        assert np.array_equal(ref, got)
        rows.append(("run_deltas", "numba", t_jit))
    return rows


def bench_accumulate(n_samples, rng):
    ids = rng.integers(0, 4096, size=n_samples).astype(np.int64)
    deltas = rng.integers(0, 1_000_000, size=n_samples).astype(np.uint64)
    rows = []
    t_np, ref = timeit(kernels._accumulate_weights_np, ids, deltas, 4096)
    rows.append(("accumulate_weights", "numpy", t_np))
    if kernels.HAVE_NUMBA:
        kernels._accumulate_weights_jit(ids[:16], deltas[:16], 4096)
        t_jit, got = timeit(kernels._accumulate_weights_jit, ids, deltas, 4096)
        assert np.array_equal(ref, got)
        rows.append(("accumulate_weights", "numba", t_jit))
    return rows


def bench_symbolize(n_samples, rng):
    starts = np.sort(rng.choice(2**40, size=20_000, replace=False)).astype(np.uint64)
    ends = starts + 256
    addrs = rng.integers(0, 2**40, size=n_samples).astype(np.uint64)
    rows = []
    t_np, ref = timeit(kernels._symbolize_indices_np, addrs, starts, ends)
    rows.append(("symbolize_indices", "numpy", t_np))
    if kernels.HAVE_NUMBA:
        kernels._symbolize_indices_jit(addrs[:16], starts, ends)
        t_jit, got = timeit(kernels._symbolize_indices_jit, addrs, starts, ends)
        assert np.array_equal(ref, got)
        rows.append(("symbolize_indices", "numba", t_jit))
    return rows


def bench_matmul(n, rng):
    a = rng.standard_normal(n * n).astype(np.float32)
    b = rng.standard_normal(n * n).astype(np.float32)
    rows = []
    c = np.zeros(n * n, dtype=np.float32)
    t_py, ref_counts = timeit(
        kernels._matmul_tiled_counted_py, a, b, c, n, 8, repeat=1
    )
    rows.append((f"matmul_counted(n={n})", "pure", t_py))
    if kernels.HAVE_NUMBA:
        warm = np.zeros(16, dtype=np.float32)
        kernels._matmul_tiled_counted_jit(warm, warm, warm.copy(), 4, 2)
        c2 = np.zeros(n * n, dtype=np.float32)
        t_jit, counts = timeit(kernels._matmul_tiled_counted_jit, a, b, c2, n, 8)
        assert tuple(counts) == tuple(ref_counts)
        rows.append((f"matmul_counted(n={n})", "numba", t_jit))
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--samples", type=int, default=2_000_000)
    parser.add_argument("--n", type=int, default=192, help="matmul dimension")
    args = parser.parse_args()
    rng = np.random.default_rng(1)

    all_rows = []
    all_rows += bench_run_deltas(args.samples, rng)
    all_rows += bench_accumulate(args.samples, rng)
    all_rows += bench_symbolize(args.samples, rng)
    all_rows += bench_matmul(args.n, rng)

    print(f"{'kernel':<24} {'impl':<6} {'best (ms)':>10} {'speedup':>8}")
    base = {}
    for name, impl, seconds in all_rows:
        if impl in ("numpy", "pure"):
            base[name] = seconds
        speedup = base[name] / seconds if name in base and seconds > 0 else 0.0
        print(f"{name:<24} {impl:<6} {seconds * 1e3:>10.2f} {speedup:>7.1f}x")


if __name__ == "__main__":
    main()
