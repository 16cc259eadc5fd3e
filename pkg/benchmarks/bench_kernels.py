"""Compare the compiled and numpy backends on the hot kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one row per (kernel, size) with the best wall time of each backend,
the speedup and the max abs difference between the two outputs.
"""

import argparse
import timeit

import numpy as np

from regionalized import _pykernels
from regionalized.poset import random_poset

try:
    from regionalized import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def mobius_case(rng, n):
    p = random_poset(n, 0.2, rng)
    leq = np.ascontiguousarray(p.leq, dtype=np.uint8)
    order = np.ascontiguousarray(p.order, dtype=np.intp)
    return "mobius_matrix", f"n={n}", (leq, order)


def closure_case(rng, n):
    perm = rng.permutation(n)
    rel = np.zeros((n, n), dtype=np.uint8)
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.1:
                rel[perm[j], perm[i]] = 1
    np.fill_diagonal(rel, 1)
    return "transitive_closure", f"n={n}", (rel,)


def segment_case(rng, m, width):
    sizes = rng.integers(1, 2 * width, size=m)
    starts = np.concatenate([[0], np.cumsum(sizes)]).astype(np.intp)
    values = rng.normal(scale=20.0, size=int(starts[-1]))
    return "segment_logsumexp", f"m={m},len={values.size}", (values, starts)


def scatter_case(rng, n, n_out):
    values = rng.normal(scale=20.0, size=n)
    dst = rng.integers(0, n_out, size=n).astype(np.intp)
    return "scatter_logsumexp", f"n={n},out={n_out}", (values, dst, n_out)


def best_time(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.05:
        number *= 4
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    cases = [
        mobius_case(rng, 32),
        mobius_case(rng, 128),
        closure_case(rng, 64),
        closure_case(rng, 256),
        segment_case(rng, 1_000, 8),
        segment_case(rng, 20_000, 8),
        scatter_case(rng, 10_000, 500),
        scatter_case(rng, 200_000, 5_000),
    ]
    header = f"{'kernel':20s} {'size':22s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s} {'max diff':>9s}"
    print(header)
    print("-" * len(header))
    for name, size, case_args in cases:
        py = getattr(_pykernels, name)
        t_py = best_time(py, case_args, args.repeat)
        if _ckernels is None:
            print(f"{name:20s} {size:22s} {1e3 * t_py:11.3f} {'n/a':>12s}")
            continue
        cy = getattr(_ckernels, name)
        t_cy = best_time(cy, case_args, args.repeat)
        diff = np.max(np.abs(np.asarray(py(*case_args), dtype=float) - np.asarray(cy(*case_args), dtype=float)))
        print(f"{name:20s} {size:22s} {1e3 * t_py:11.3f} {1e3 * t_cy:12.3f} {t_py / t_cy:8.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
