#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Covers the shapes the training loop actually hits (desk config: 16 channels,
48x48 crops, 3x3 kernels) plus the patch-correlation search. Run after
building the extension:

    python benchmarks/bench_kernels.py [--reps 30]
"""

import argparse
import time

import numpy as np

from mvenhance.backend import fallback

try:
    from mvenhance.backend import _kernels as compiled
except ImportError:
    compiled = None

CONV_CASES = [
    ("encoder 3->16, 48x48", (1, 3, 48, 48), (16, 3, 3, 3)),
    ("unit conv 16->16, 48x48", (1, 16, 48, 48), (16, 16, 3, 3)),
    ("spatial 64->16, 48x48", (1, 64, 48, 48), (16, 64, 3, 3)),
    ("fusion weights 48->16, 48x48", (1, 48, 48, 48), (16, 48, 3, 3)),
    ("ssim window 1->1 11x11, 48x48", (1, 1, 48, 48), (1, 1, 11, 11)),
    ("unit conv 16->16, 96x96", (1, 16, 96, 96), (16, 16, 3, 3)),
]


def timeit(fn, *args, reps):
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def bench_conv(reps):
    rng = np.random.default_rng(0)
    print(f"{'case':34s} {'numpy fwd':>10s} {'cython fwd':>11s} "
          f"{'numpy bwd':>10s} {'cython bwd':>11s}")
    for name, xs, ws in CONV_CASES:
        x = rng.standard_normal(xs, dtype=np.float32)
        w = rng.standard_normal(ws, dtype=np.float32)
        pad = ws[-1] // 2
        dy = np.ones_like(fallback.conv2d_forward(x, w, 1, pad))
        nf = timeit(fallback.conv2d_forward, x, w, 1, pad, reps=reps)
        nb = timeit(fallback.conv2d_backward, x, w, dy, 1, pad, reps=reps)
        if compiled is not None:
            cf = timeit(compiled.conv2d_forward, x, w, 1, pad, reps=reps)
            cb = timeit(compiled.conv2d_backward, x, w, dy, 1, pad, reps=reps)
            print(f"{name:34s} {nf:9.3f}ms {cf:9.3f}ms ({nf / cf:4.1f}x) "
                  f"{nb:9.3f}ms {cb:9.3f}ms ({nb / cb:4.1f}x)")
        else:
            print(f"{name:34s} {nf:9.3f}ms {'-':>11s} {nb:9.3f}ms {'-':>11s}")


def bench_search(reps):
    rng = np.random.default_rng(1)
    print()
    for rows, cols, d, radius in [(7, 7, 784, 2), (14, 14, 784, 2), (7, 7, 392, 1)]:
        p = rng.standard_normal((rows, cols, d))
        s = rng.standard_normal((rows, cols, d))
        nf = timeit(fallback.window_scores, p, s, radius, reps=reps)
        label = f"window scores {rows}x{cols} grid, d={d}, r={radius}"
        if compiled is not None:
            cf = timeit(compiled.window_scores, p, s, radius, reps=reps)
            print(f"{label:42s} numpy {nf:7.3f}ms  cython {cf:7.3f}ms ({nf / cf:4.1f}x)")
        else:
            print(f"{label:42s} numpy {nf:7.3f}ms  cython -")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=30)
    args = ap.parse_args()
    if compiled is None:
        print("compiled kernels not available; benchmarking fallback only\n")
    bench_conv(args.reps)
    bench_search(args.reps)


if __name__ == "__main__":
    main()
