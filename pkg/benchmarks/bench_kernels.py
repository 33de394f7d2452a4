"""Compiled vs pure-Python propagation kernels.

    python benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from sublab import kernels, model
from sublab.propagate import rk4_step_matrices, discrete_coefficients

CASES = {
    "discrete_chain n=1e5": lambda: (kernels.discrete_chain,
                                     (discrete_coefficients(model.decaying_anderson(1.0, 0), 0.0,
                                                            model.Grid.discrete(100_000)),
                                      np.array([1.0, 0.0, 0.0, 1.0]))),
    "matrix_chain n=1e5": lambda: (kernels.matrix_chain,
                                   (rk4_step_matrices(model.euler(), 0.0, model.Grid.continuum(1e4, 0.1)),
                                    np.array([1.0, 0.0, 0.0, 1.0]), 0.1)),
    "hash_uniform n=1e6": lambda: (kernels.hash_uniform, (7, 1, 1_000_000)),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available_backends()
    prev = kernels.backend_name()
    print(f"{'case':<24}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    try:
        for name, make in CASES.items():
            fn, fargs = make()
            times = {}
            for b in backends:
                kernels.use_backend(b)
                times[b] = min(timeit.repeat(lambda: fn(*fargs), number=1, repeat=args.repeat))
            row = f"{name:<24}" + "".join(f"{times[b]:>11.4f}s" for b in backends)
            if "compiled" in times:
                row += f"{times['python'] / times['compiled']:>9.1f}x"
            print(row)
    finally:
        kernels.use_backend(prev)


if __name__ == "__main__":
    main()
