"""Times the transposed-convolution kernels on every available backend.

The compiled extension and the numpy fallback implement the same three
entry points (forward, input gradient, weight gradient); this script checks
they agree on each problem and reports per-call timings plus the speedup of
the compiled path.  Shapes mirror the decoder layers that dominate training.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 5] [--batch 64]
"""

import argparse
import time

import numpy as np

from pcvae.numerics import kernels
from pcvae.numerics.rng import Rng

# (label, in_channels, out_channels, in_hw, kernel, stride, padding, output_padding)
PROBLEMS = [
    ("desk trunk 1x1->2x2", 16, 6, (1, 1), 2, 2, 0, 0),
    ("desk trunk 2x2->4x4", 6, 6, (2, 2), 2, 2, 0, 0),
    ("desk head 4x4->8x8", 6, 4, (4, 4), 2, 2, 0, 0),
    ("paper trunk 1x1->8x8", 300, 64, (1, 1), 7, 8, 0, 1),
    ("paper trunk 8x8->16x16", 64, 64, (8, 8), 3, 2, 1, 1),
    ("paper head 16x16->32x32", 64, 32, (16, 16), 3, 2, 1, 1),
]


def best_of(repeats, fn, *args, **kwargs):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_problem(label, cin, cout, in_hw, k, stride, pad, opad, batch, repeats):
    rng = Rng(1)
    x = rng.split(0).normal((batch, cin, in_hw[0], in_hw[1]))
    w = rng.split(1).normal((cin, cout, k, k))
    out_hw = kernels.conv_transpose2d_shape(in_hw, k, stride, pad, opad)
    gout = rng.split(2).normal((batch, cout, out_hw[0], out_hw[1]))

    impls = kernels.backends()
    results = {}
    for name, impl in impls.items():
        fwd = kernels.conv_transpose2d_forward(x, w, stride, pad, opad, impl=impl)
        gin = kernels.conv_transpose2d_grad_input(gout, w, stride, pad, in_hw, impl=impl)
        gw = kernels.conv_transpose2d_grad_weight(gout, x, stride, pad, k, impl=impl)
        results[name] = (fwd, gin, gw)
    names = sorted(impls)
    if len(names) == 2:
        # summation order differs between backends; allow reassociation noise
        for a, b in zip(results[names[0]], results[names[1]]):
            if not np.allclose(a, b, rtol=1e-9, atol=1e-9):
                raise SystemExit(f"{label}: backends disagree")

    print(f"{label}  (batch {batch})")
    times = {}
    for name, impl in impls.items():
        t_fwd = best_of(repeats, kernels.conv_transpose2d_forward,
                        x, w, stride, pad, opad, impl=impl)
        t_gin = best_of(repeats, kernels.conv_transpose2d_grad_input,
                        gout, w, stride, pad, in_hw, impl=impl)
        t_gw = best_of(repeats, kernels.conv_transpose2d_grad_weight,
                       gout, x, stride, pad, k, impl=impl)
        times[name] = (t_fwd, t_gin, t_gw)
        print(f"  {name:7s} forward {t_fwd * 1e3:8.3f} ms   "
              f"grad_input {t_gin * 1e3:8.3f} ms   grad_weight {t_gw * 1e3:8.3f} ms")
    if "cython" in times and "python" in times:
        speedups = [p / c for p, c in zip(times["python"], times["cython"])]
        print(f"  speedup: forward {speedups[0]:.1f}x, grad_input {speedups[1]:.1f}x, "
              f"grad_weight {speedups[2]:.1f}x")
    print()


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="best-of timing repeats")
    parser.add_argument("--batch", type=int, default=64)
    args = parser.parse_args()

    available = ", ".join(sorted(kernels.backends()))
    print(f"backends available: {available}; active: {kernels.active_backend()}\n")
    for problem in PROBLEMS:
        bench_problem(*problem, batch=args.batch, repeats=args.repeats)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
