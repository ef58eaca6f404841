#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times conv2d and depthwise cross-correlation (forward and backward) on
the layer shapes the default configs actually run, plus one larger
scale. Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from apntrack.kernels import numpy_backend

try:
    from apntrack.kernels import _native as native_backend
except ImportError:
    native_backend = None

CONV_CASES = [
    # (label, batch, in_ch, size, out_ch, kernel, stride)
    ("toy block1", 8, 3, 96, 16, 3, 2),
    ("toy block2", 8, 16, 47, 32, 3, 2),
    ("toy block4", 8, 48, 21, 48, 3, 1),
    ("toy heads", 8, 32, 9, 32, 3, 1),
    ("full block3", 1, 256, 68, 384, 3, 2),
]

XCORR_CASES = [
    # (label, batch, channels, search, template)
    ("toy mid", 8, 48, 19, 11),
    ("toy deep", 8, 32, 17, 9),
    ("full mid", 1, 384, 31, 11),
]


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_conv(backend, case, repeats, rng):
    _, b, ci, size, co, k, stride = case
    x = rng.normal(size=(b, ci, size, size))
    w = rng.normal(size=(co, ci, k, k))
    bias = rng.normal(size=co)
    y = backend.conv2d_forward(x, w, bias, stride, 0)
    gy = rng.normal(size=y.shape)
    fwd = _time(lambda: backend.conv2d_forward(x, w, bias, stride, 0), repeats)
    bwd = _time(lambda: backend.conv2d_backward(x, w, stride, 0, gy), repeats)
    return fwd, bwd


def bench_xcorr(backend, case, repeats, rng):
    _, b, c, search, template = case
    x = rng.normal(size=(b, c, search, search))
    z = rng.normal(size=(b, c, template, template))
    y = backend.dwxcorr_forward(x, z)
    gy = rng.normal(size=y.shape)
    fwd = _time(lambda: backend.dwxcorr_forward(x, z), repeats)
    bwd = _time(lambda: backend.dwxcorr_backward(x, z, gy), repeats)
    return fwd, bwd


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    backends = [("numpy", numpy_backend)]
    if native_backend is not None:
        backends.append(("native", native_backend))
    else:
        print("compiled backend unavailable; timing numpy only")

    header = f"{'case':<16}{'pass':<6}" + "".join(f"{n + ' (ms)':>14}" for n, _ in backends)
    if len(backends) == 2:
        header += f"{'native speedup':>16}"
    print(header)
    print("-" * len(header))

    for kind, cases, bench in (("conv", CONV_CASES, bench_conv),
                               ("xcorr", XCORR_CASES, bench_xcorr)):
        for case in cases:
            rows = [bench(impl, case, args.repeats, rng) for _, impl in backends]
            for pi, pname in enumerate(("fwd", "bwd")):
                line = f"{case[0]:<16}{pname:<6}"
                for row in rows:
                    line += f"{row[pi] * 1e3:>14.2f}"
                if len(rows) == 2:
                    line += f"{rows[0][pi] / rows[1][pi]:>15.2f}x"
                print(line)
    print()


if __name__ == "__main__":
    main()
