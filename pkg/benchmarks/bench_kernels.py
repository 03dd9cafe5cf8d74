"""Time the compiled and pure-Python unit-modulus ascent kernels.

    python3 benchmarks/bench_kernels.py [--sizes 8,32,128,512] [--repeats 5]

Both backends start from the same random phases on the same Hermitian
matrix; the script reports the best-of-N wall time, the sweep count and the
objective each one reached.
"""

import argparse
import sys
import timeit

import numpy as np

from aris_privacy.kernels import BACKEND, unit_modulus_ascent


def problem(n, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    D = -(A @ np.conj(A).T) / n
    D[:-1, -1] = rng.standard_normal(n - 1) + 1j * rng.standard_normal(n - 1)
    D[-1, :-1] = np.conj(D[:-1, -1])
    z0 = np.exp(2j * np.pi * rng.random(n))
    return D, z0


def run(backend, D, z0, repeats):
    out = {}

    def once():
        z = z0.copy()
        out["result"] = unit_modulus_ascent(D, z, 1e-10, 2000, backend=backend)

    best = min(timeit.repeat(once, number=1, repeat=repeats))
    return best, out["result"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="8,32,128,512")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    if BACKEND != "cython":
        print("compiled kernel not built; only the Python backend is available", file=sys.stderr)
    print(f"{'n':>5} {'python ms':>10} {'cython ms':>10} {'speedup':>8} {'sweeps':>7} {'objective gap':>14}")
    for n in (int(x) for x in args.sizes.split(",")):
        D, z0 = problem(n)
        t_py, (obj_py, sw_py) = run("python", D, z0, args.repeats)
        if BACKEND == "cython":
            t_cy, (obj_cy, _) = run("cython", D, z0, args.repeats)
            print(f"{n:5d} {1e3 * t_py:10.2f} {1e3 * t_cy:10.2f} {t_py / t_cy:8.1f} {sw_py:7d} "
                  f"{abs(obj_py - obj_cy) / abs(obj_py):14.1e}")
        else:
            print(f"{n:5d} {1e3 * t_py:10.2f} {'-':>10} {'-':>8} {sw_py:7d} {'-':>14}")


if __name__ == "__main__":
    main()
