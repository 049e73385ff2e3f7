"""Time the compiled kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Numba rows are skipped when numba is unavailable or disabled with
SOFTENTROPY_NO_NUMBA=1. Compilation happens in a warm-up call that is not timed.
"""

import argparse
import timeit

import numpy as np

from softentropy import _accel, kernels


def cases(scale: float, rng: np.random.Generator):
    n_mut, n_tests = int(20_000 * scale), 40
    codes = rng.choice(np.array([0, 1, 2], dtype=np.int8), size=(n_mut, n_tests), p=[0.9, 0.08, 0.02])
    order = rng.permutation(n_tests).astype(np.int64)
    n_nodes = int(50_000 * scale)
    src = rng.integers(0, n_nodes, n_nodes).astype(np.int64)
    dst = rng.integers(0, n_nodes, n_nodes).astype(np.int64)
    progs = rng.integers(1, 8, (int(100_000 * scale), 6)).astype(np.int64)
    inputs = np.arange(4, dtype=np.int64)
    return [
        ("prefix_survivor_counts", kernels.prefix_survivor_counts_numba,
         kernels.prefix_survivor_counts_numpy, (codes, order)),
        ("unique_killer", kernels.unique_killer_numba, kernels.unique_killer_numpy, (codes,)),
        ("label_components", kernels.label_components_numba, kernels.label_components_numpy,
         (n_nodes, src, dst)),
        ("stack_outputs", kernels.stack_outputs_numba, kernels.stack_outputs_numpy, (progs, inputs, 7)),
    ]


def best(fn, args, repeat: int) -> float:
    fn(*args)  # warm-up, and numba compilation
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"backend: {_accel.BACKEND}")
    print(f"{'kernel':<24}{'numpy ms':>12}{'numba ms':>12}{'speed-up':>10}")
    for name, fast, slow, fn_args in cases(args.scale, rng):
        t_np = best(slow, fn_args, args.repeat)
        if fast is None:
            print(f"{name:<24}{t_np * 1e3:>12.2f}{'-':>12}{'-':>10}")
            continue
        t_nb = best(fast, fn_args, args.repeat)
        print(f"{name:<24}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
