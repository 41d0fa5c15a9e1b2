"""Compare the compiled kernels with the pure-Python fallback.

Run from the repository root after building the extension:

    python3 setup.py build_ext --inplace -q
    python3 benchmarks/bench_kernels.py --repeat 5
"""

from __future__ import annotations

import argparse
import math
import timeit

import numpy as np

from gptscore import _kernels_py

try:
    from gptscore import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def workloads(seed: int) -> dict[str, tuple]:
    rng = np.random.default_rng(seed)
    n_groups, size = 200, 8
    auto = rng.normal(size=n_groups * size)
    human = np.round(rng.normal(size=n_groups * size) * 2)
    offsets = np.arange(0, n_groups * size + 1, size, dtype=np.intp)
    idx = rng.integers(0, n_groups, size=n_groups).astype(np.intp)
    a = rng.integers(0, 50, size=400).astype(np.intp)
    b = rng.integers(0, 50, size=400).astype(np.intp)
    x = rng.normal(size=5000)
    y = x + rng.normal(size=5000)
    return {
        "spearman n=5000": ("spearman", (x, y)),
        "group_correlations 200x8": ("group_correlations", (auto, human, offsets, 1)),
        "resampled dataset corr 200x8": ("resampled_dataset_correlation", (auto, human, offsets, idx, 1)),
        "lcs_length 400x400": ("lcs_length", (a, b)),
    }


def bench(module, name: str, args: tuple, repeat: int) -> float:
    fn = getattr(module, name)
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if _kernels_c is None:
        print("compiled kernels not built; run `python3 setup.py build_ext --inplace -q` first")
        return 1

    print(f"{'workload':32s} {'python':>12s} {'cython':>12s} {'speedup':>9s}")
    for label, (name, fargs) in workloads(args.seed).items():
        ref = getattr(_kernels_py, name)(*fargs)
        got = getattr(_kernels_c, name)(*fargs)
        same = np.allclose(np.asarray(ref, dtype=float), np.asarray(got, dtype=float), rtol=0, atol=1e-12, equal_nan=True)
        t_py = bench(_kernels_py, name, fargs, args.repeat)
        t_c = bench(_kernels_c, name, fargs, args.repeat)
        flag = "" if same else "  RESULTS DIFFER"
        speedup = t_py / t_c if t_c > 0 else math.inf
        print(f"{label:32s} {t_py * 1e3:10.3f}ms {t_c * 1e3:10.3f}ms {speedup:8.1f}x{flag}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
