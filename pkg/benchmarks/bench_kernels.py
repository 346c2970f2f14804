"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from cascademap import kernels


def cases(rng):
    lhs = rng.integers(-128, 128, size=(64, 64), dtype=np.int64).astype(np.int8)
    rhs = rng.integers(-128, 128, size=(64, 64), dtype=np.int64).astype(np.int8)
    acc = rng.integers(-2**20, 2**20, size=(64, 64), dtype=np.int64).astype(np.int32)
    bias = rng.integers(-2**16, 2**16, size=64, dtype=np.int64).astype(np.int32)
    occ = np.zeros((8, 38), dtype=np.uint8)
    occ[:, :30] = 1
    occ[0:3, 30:34] = 1
    return {
        "blocked_matmul 64x64x64": lambda m: m.blocked_matmul(lhs, rhs, acc, 4, 8, 8),
        "blocked_matmul 8x32x16": lambda m: m.blocked_matmul(lhs[:8, :32].copy(), rhs[:32, :16].copy(), None, 4, 8, 8),
        "requantize 64x64": lambda m: m.requantize(acc, bias, 9, True),
        "find_bottom_left 8x38": lambda m: m.find_bottom_left(occ, 4, 3),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        cy = None
        print("compiled extension not built; timing the fallback only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'python us':>12}{'cython us':>12}{'speedup':>9}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=args.repeat, repeat=3)) / args.repeat * 1e6
        if cy is None:
            print(f"{name:<26}{t_py:>12.1f}")
            continue
        a, b = fn(py), fn(cy)
        same = (np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b)
        if not same:
            raise SystemExit(f"{name}: backends disagree")
        t_cy = min(timeit.repeat(lambda: fn(cy), number=args.repeat, repeat=3)) / args.repeat * 1e6
        print(f"{name:<26}{t_py:>12.1f}{t_cy:>12.1f}{t_py / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
