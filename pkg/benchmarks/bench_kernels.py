"""Timing comparison of the jitted kernels against the numpy reference.

Runs every kernel on representative workloads with both implementation
modules, prints a table of best-of-N wall times plus the speedup, and
cross-checks that the two backends agree on each workload before timing.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]
"""

import argparse
import time

import numpy as np

from eclad.kernels import numpy_impl

try:
    from eclad.kernels import numba_impl
except ImportError:  # numba missing or disabled
    numba_impl = None


def workloads(scale: float):
    rng = np.random.default_rng(0)
    s = lambda v: max(8, int(round(v * scale)))

    act = rng.random((s(16), s(16), 64)).astype(np.float64)
    img = rng.random((s(224), s(224), 3)).astype(np.float64)
    w = rng.normal(size=(3, 3, 32, 64))
    x = rng.random((s(64), s(64), 32))
    dy = rng.random((s(64), s(64), 64))
    mask = rng.random((s(256), s(256))) < 0.002
    pts = rng.random((s(4096) * 16, 56))
    cents = rng.random((8, 56))
    pooled, idx = numpy_impl.maxpool2_fwd(x)

    yield "resize_nearest", "resize_nearest", (act, s(224), s(224)), {}
    yield "resize_bilinear", "resize_bilinear", (act, s(224), s(224)), {}
    yield "resize_bicubic", "resize_bicubic", (act, s(224), s(224)), {}
    yield "conv2d_fwd", "conv2d_fwd", (x, w, np.zeros(64)), {}
    yield "conv2d_bwd_params", "conv2d_bwd_params", (x, dy, 3, 3), {}
    yield "maxpool2_fwd", "maxpool2_fwd", (img,), {}
    yield "maxpool2_bwd", "maxpool2_bwd", (dy[: pooled.shape[0], : pooled.shape[1], :32], idx), {}
    yield "edt_sq", "edt_sq", (mask,), {}
    yield "kmeans_assign", "kmeans_assign", (pts, cents), {}


def best_of(fn, args, kwargs, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args, **kwargs)
        times.append(time.perf_counter() - t0)
    return min(times)


def as_arrays(result):
    if isinstance(result, tuple):
        return result
    return (result,)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions per kernel (best is kept)")
    parser.add_argument("--scale", type=float, default=1.0,
                        help="workload size multiplier")
    args = parser.parse_args()

    if numba_impl is None:
        print("numba backend unavailable; timing the numpy reference only")

    header = f"{'kernel':<20} {'numpy':>10} {'numba':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, attr, fargs, fkwargs in workloads(args.scale):
        ref_fn = getattr(numpy_impl, attr)
        ref = best_of(ref_fn, fargs, fkwargs, args.repeat)
        if numba_impl is None:
            print(f"{name:<20} {ref * 1e3:>8.2f}ms {'-':>10} {'-':>8}")
            continue
        jit_fn = getattr(numba_impl, attr)
        jit_fn(*fargs, **fkwargs)  # compile outside the timed region
        for a, b in zip(as_arrays(ref_fn(*fargs, **fkwargs)),
                        as_arrays(jit_fn(*fargs, **fkwargs))):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)
        jit = best_of(jit_fn, fargs, fkwargs, args.repeat)
        print(f"{name:<20} {ref * 1e3:>8.2f}ms {jit * 1e3:>8.2f}ms {ref / jit:>7.1f}x")


if __name__ == "__main__":
    main()
