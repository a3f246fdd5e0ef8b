#!/usr/bin/env python3
"""Throughput comparison of the compiled and NumPy kernel backends.

Times the three voxel hot loops on synthetic data and prints MVox/s per
backend plus the speedup of the compiled extension.

Usage: python benchmarks/bench_kernels.py [--sizes 1e5,1e6,1e7] [--repeats 7]
"""

import argparse
import time

import numpy as np

from ctwindow._kernels import _numpy as numpy_backend

try:
    from ctwindow._kernels import _core as cython_backend
except ImportError:
    cython_backend = None


def best_time(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_window(backend, values, repeats):
    out = np.empty_like(values)
    lo, hi = np.float32(-160.0), np.float32(240.0)
    return best_time(lambda: backend.window_normalize(values, lo, hi, out), repeats)


def bench_classify(backend, values, repeats):
    lo = np.array([52.0, 108.0, 181.0], np.float32)
    hi = np.array([199.0, 255.0, 255.0], np.float32)
    center = (lo + hi) / 2
    labels = np.array([1, 2, 3], np.uint8)
    out = np.zeros(values.shape, np.uint8)
    return best_time(
        lambda: backend.classify_bands(values, lo, hi, center, labels, 1, out), repeats)


def bench_counts(backend, labels_a, labels_b, repeats):
    def run():
        counts = np.zeros((3, 256), np.int64)
        backend.label_overlap_counts(labels_a, labels_b, counts)
    return best_time(run, repeats)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="1e5,1e6,1e7")
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()
    sizes = [int(float(s)) for s in args.sizes.split(",")]

    backends = [("numpy", numpy_backend)]
    if cython_backend is not None:
        backends.append(("cython", cython_backend))
    else:
        print("note: compiled extension not built; timing the fallback only")

    rng = np.random.default_rng(0)
    header = f"{'kernel':<22}{'n':>12}" + "".join(f"{name + ' MVox/s':>16}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))

    for n in sizes:
        values = rng.uniform(-2000, 2000, n).astype(np.float32)
        norm = rng.uniform(0, 255, n).astype(np.float32)
        la = rng.integers(0, 4, n).astype(np.uint8)
        lb = rng.integers(0, 4, n).astype(np.uint8)
        for kernel, runner in (
            ("window_normalize", lambda b: bench_window(b, values, args.repeats)),
            ("classify_bands", lambda b: bench_classify(b, norm, args.repeats)),
            ("label_overlap_counts", lambda b: bench_counts(b, la, lb, args.repeats)),
        ):
            rates = [n / runner(backend) / 1e6 for _, backend in backends]
            line = f"{kernel:<22}{n:>12,}" + "".join(f"{r:>16.1f}" for r in rates)
            if len(rates) == 2:
                line += f"{rates[1] / rates[0]:>9.2f}x"
            print(line)


if __name__ == "__main__":
    main()
