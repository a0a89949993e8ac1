"""Compare the compiled forward kernel against the numpy fallback.

Run:  python3 benchmarks/bench_kernel.py [--repeats 5]

The single-vector forward dominates search time (every transform application
and decode goes through it, one element at a time), so this is the hot path
worth compiling. Batch training uses numpy matmuls either way.
"""
import argparse
import time

import numpy as np

from gridsynth.nn import backend
from gridsynth.nn import _kernel_py
from gridsynth.nn.net import init_dense

try:
    from gridsynth.nn import _kernel
    KERNELS = {"compiled": _kernel, "python": _kernel_py}
except ImportError:
    KERNELS = {"python": _kernel_py}

# (label, layer sizes) pairs matching the nets search actually runs
SHAPES = [
    ("encoder 27-64-16", (27, 64, 16)),
    ("transform 16-256-16", (16, 256, 16)),
    ("decoder 16-64-27", (16, 64, 27)),
]


def bench(kernel, sizes, n_calls=20000, repeats=5):
    net = init_dense(sizes, np.random.default_rng(0))
    xs = np.random.default_rng(1).normal(size=(64, sizes[0]))
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for i in range(n_calls):
            kernel.forward(net.Ws, net.bs, xs[i % 64])
        best = min(best, (time.perf_counter() - t0) / n_calls)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--calls", type=int, default=20000, help="calls per timing run")
    ap.add_argument("--repeats", type=int, default=5, help="timing runs; best wins")
    args = ap.parse_args()

    print(f"active kernel: {backend.KERNEL_NAME}")
    print(f"{'net':<24}" + "".join(f"{k:>14}" for k in KERNELS) +
          ("" if len(KERNELS) < 2 else f"{'speedup':>10}"))
    for label, sizes in SHAPES:
        per = {k: bench(mod, sizes, args.calls, args.repeats)
               for k, mod in KERNELS.items()}
        row = f"{label:<24}" + "".join(f"{per[k]*1e6:>12.2f}us" for k in KERNELS)
        if len(per) == 2:
            row += f"{per['python'] / per['compiled']:>9.2f}x"
        print(row)

    # agreement check: identical math up to float summation order
    net = init_dense((27, 64, 16), np.random.default_rng(2))
    x = np.random.default_rng(3).normal(size=27)
    outs = [mod.forward(net.Ws, net.bs, x) for mod in KERNELS.values()]
    if len(outs) == 2:
        diff = float(np.abs(outs[0] - outs[1]).max())
        print(f"max |compiled - python| on one forward: {diff:.3e}")


if __name__ == "__main__":
    main()
