"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints one line per kernel and workload: time per call for each backend
and the speed-up. Single-row workloads mirror how training loops call the
kernels (one environment step at a time); batched ones mirror dataset
featurization and lockstep evaluation.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from karl import _kernels_py as py
from karl import kernels
from karl.dictionaries import monomial_exponents

LORENZ_PARAMS = np.array([10.0, 28.0, 8.0 / 3.0])
FLUID_PARAMS = np.array([0.1, 1.0, -0.1, 1.0])


def workloads(rng):
    E2 = monomial_exponents(3, 2)
    E4 = monomial_exponents(3, 4)
    x1 = rng.normal(size=(1, 3))
    xb = rng.normal(size=(30000, 3))
    u1 = rng.normal(size=(1, 1))
    ub = rng.normal(size=(30000, 1))
    xe = rng.normal(size=(100, 2))
    ue = rng.normal(size=(100, 1))
    ne = rng.normal(size=(100, 2))
    A3 = -np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    b3 = rng.normal(size=(3, 1))
    S3 = b3 @ b3.T
    return [
        ("monomials deg2 x1", "monomials", (E2, x1)),
        ("monomials deg4 x30000", "monomials", (E4, xb)),
        ("rk4 lorenz x1", "rk4", (kernels.LORENZ, LORENZ_PARAMS, x1, u1, 0.01)),
        ("rk4 fluid x30000", "rk4", (kernels.FLUID_FLOW, FLUID_PARAMS, xb, ub, 0.01)),
        ("euler-maruyama dw x100", "euler_maruyama",
         (kernels.DOUBLE_WELL, np.zeros(0), xe, ue, 0.01, ne)),
        ("riccati flow 3x3", "riccati_flow", (A3, S3, np.eye(3), 1e-3, 1e-10, 100_000)),
    ]


def bench(fn, args, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(lambda: fn(*args), number=1), 1e-7)))
    best = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat))
    return best / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if not kernels.compiled_available():
        print("compiled extension not built; only the numpy backend is available")
        return 1
    cy = kernels.compiled()
    rng = np.random.default_rng(0)
    print(f"{'workload':28s} {'numpy':>12s} {'cython':>12s} {'speed-up':>9s}")
    for label, name, fargs in workloads(rng):
        a, b = getattr(py, name)(*fargs), getattr(cy, name)(*fargs)
        if isinstance(a, tuple):  # (P, iterations, status)
            assert a[1:] == b[1:], label
            a, b = a[0], b[0]
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12), label
        t_py = bench(getattr(py, name), fargs, args.repeat)
        t_cy = bench(getattr(cy, name), fargs, args.repeat)
        print(f"{label:28s} {t_py * 1e6:10.2f}us {t_cy * 1e6:10.2f}us {t_py / t_cy:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
