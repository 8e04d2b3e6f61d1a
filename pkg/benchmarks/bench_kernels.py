"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 100000] [--repeat 5]

Prints one line per kernel with the best-of-``repeat`` wall time of each
backend and their ratio, after checking that the two agree.
"""

import argparse
import timeit

import numpy as np

from frozenflow.kernels import GAUSSIAN, get_backend


def cases(n, rng):
    traj = np.arange(n, dtype=np.uint64)
    X = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    c3 = rng.normal(size=(n, 3)) * 0.3
    th = rng.uniform(-1.0, 1.0, n)
    ph = rng.uniform(-np.pi, np.pi, n)
    c2 = rng.normal(size=(n, 2)) * 0.2
    r = rng.uniform(0.5, 3.0, n)
    return {
        "draw_gaussian": lambda k: k.draw(7, traj, 3, 4, GAUSSIAN, 0),
        "so3_apply": lambda k: k.so3_apply(X, c3),
        "sphere_flow": lambda k: k.sphere_flow(th, ph, c2[:, 0], c2[:, 1]),
        "cauchy_flow": lambda k: k.cauchy_flow(r, ph, c2[:, 0], c2[:, 1]),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    py = get_backend("python")
    try:
        cy = get_backend("cython")
    except ImportError:
        print("compiled backend not built; only the numpy fallback is available")
        return 1

    print(f"n = {args.n}")
    print(f"{'kernel':<15}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}{'max diff':>11}")
    for name, fn in cases(args.n, np.random.default_rng(0)).items():
        a, b = fn(py), fn(cy)
        diff = max(float(np.nanmax(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in
                   zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)))
        tp = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        tc = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<15}{tp:>10.2f}{tc:>11.2f}{tp / tc:>9.1f}{diff:>11.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
