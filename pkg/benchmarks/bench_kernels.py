"""Compare the compiled and numpy kernel backends on desk and square-mile sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from firewatch import _pykernels as py
from firewatch import kernels
from firewatch.region import disk_offsets

try:
    from firewatch import _ckernels as ck
except ImportError:
    ck = None


def cases(n):
    rng = np.random.default_rng(0)
    fov = disk_offsets(180.0, 30.0)
    reach = disk_offsets(360.0, 30.0)
    kern = disk_offsets(300.0, 30.0)
    ip, ov = kernels.overlap_table(reach, fov)
    grid = rng.random((n, n))
    w = rng.random(len(kern))
    H = 3
    node = rng.normal(size=(H, n * n))
    sigma = rng.random((H, n * n))
    term = np.zeros(n * n)
    return {
        "footprint_sum": lambda m: m.footprint_sum(grid, fov),
        "neighbor_product": lambda m: m.neighbor_product(grid, kern, w),
        "chain_dp_backward": lambda m: m.chain_dp_backward(node, sigma, term, reach, fov, ip, ov, n, n, True),
        "pair_penalties": lambda m: m.pair_penalties(sigma[1], (n * n) // 2, reach, fov, ip, ov, n, n),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", py)] + ([("cython", ck)] if ck else [])
    print(f"{'grid':>6} {'kernel':<18}" + "".join(f"{b:>12}" for b, _ in backends) + "   speedup")
    for n in (20, 53):
        for name, fn in cases(n).items():
            times = []
            for _, mod in backends:
                fn(mod)  # warm up
                times.append(min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)))
            speed = f"{times[0] / times[1]:8.1f}x" if len(times) == 2 else "      n/a"
            print(f"{n:>4}^2 {name:<18}" + "".join(f"{t * 1e3:10.2f}ms" for t in times) + "  " + speed)


if __name__ == "__main__":
    main()
