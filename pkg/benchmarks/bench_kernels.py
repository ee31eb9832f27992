#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Run: python benchmarks/bench_kernels.py [--repeats N]
"""
import argparse
import time

import numpy as np

from hops._kernels import _pylib

try:
    from hops._kernels import _native
except ImportError:
    _native = None


def timeit(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def sinkhorn_problem(batch, num_classes, seed=0):
    rng = np.random.default_rng(seed)
    rows = (rng.random((batch, num_classes)) < 0.4).astype(np.uint8)
    rows[np.arange(batch), rng.integers(0, num_classes, batch)] = 1
    probs = rng.random((batch, num_classes)) + 0.01
    probs /= probs.sum(axis=1, keepdims=True)
    card = rows.sum(axis=1)
    c = (rows / card[:, None]).sum(axis=0) / batch
    r = np.full(batch, 1.0 / batch)
    with np.errstate(divide="ignore"):
        log_kernel = np.where(rows == 1, -(1.0 - probs) / 0.05, -np.inf)
    return log_kernel, r, c


def counts_problem(n, num_classes, k, batch, seed=0):
    rng = np.random.default_rng(seed)
    rows = (rng.random((n, num_classes)) < 0.4).astype(np.uint8)
    rows[np.arange(n), rng.integers(0, num_classes, n)] = 1
    nbrs = np.ascontiguousarray(
        np.stack([rng.permutation(n)[:k] for _ in range(n)]).astype(np.int64)
    )
    idx = rng.permutation(n)[:batch].astype(np.int64)
    return rows, idx, nbrs


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    if _native is None:
        print("compiled backend unavailable; showing the fallback only")
    backends = [("python", _pylib)] + ([("native", _native)] if _native else [])

    cases = []
    log_kernel, r, c = sinkhorn_problem(32, 10)
    cases.append(
        ("sinkhorn_log 32x10 x50it",
         lambda impl: impl.sinkhorn_log_loop(log_kernel, r, c, 50, 0.0))
    )
    log_kernel2, r2, c2 = sinkhorn_problem(64, 32, seed=1)
    cases.append(
        ("sinkhorn_log 64x32 x50it",
         lambda impl: impl.sinkhorn_log_loop(log_kernel2, r2, c2, 50, 0.0))
    )
    rows, idx, nbrs = counts_problem(160, 10, 20, 32)
    cases.append(
        ("hard_counts n=160 k=20 B=32",
         lambda impl: impl.hard_counts(rows, idx, nbrs))
    )
    blob = np.random.default_rng(0).bytes(1 << 20)
    cases.append(("fnv1a64 1MiB", lambda impl: impl.fnv1a64(blob)))

    width = max(len(name) for name, _ in cases)
    header = f"{'kernel':<{width}}  " + "  ".join(f"{n:>12}" for n, _ in backends)
    if _native is not None:
        header += f"  {'speedup':>8}"
    print(header)
    for name, call in cases:
        times = [timeit(lambda impl=impl: call(impl), args.repeats) for _, impl in backends]
        row = f"{name:<{width}}  " + "  ".join(f"{t * 1e6:>10.1f}us" for t in times)
        if len(times) == 2:
            row += f"  {times[0] / times[1]:>7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
