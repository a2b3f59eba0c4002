"""Compare the compiled and pure-Python local polynomial kernels.

    python3 benchmarks/bench_kernels.py [--n 400 1600] [--repeat 5]

Prints one row per (backend, kernel, n) with the best wall time of
``--repeat`` runs of a fit at every data point, and checks both backends
agree to 1e-10.
"""

import argparse
import time

import numpy as np

from plmpart import _backend


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[200, 400, 1600])
    ap.add_argument("--degree", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    kernels = {"python": _backend.python_kernel}
    if _backend.compiled_kernel is not None:
        kernels["compiled"] = _backend.compiled_kernel
    else:
        print("compiled kernel not built; timing the fallback only")

    rng = np.random.default_rng(0)
    print(f"{'backend':>9} {'kernel':>13} {'n':>6} {'seconds':>10} {'speedup':>8}")
    for n in args.n:
        x = np.sort(rng.uniform(-1, 1, n))
        y = np.sin(3 * x) + 0.2 * rng.standard_normal(n)
        for fam, code in (("epanechnikov", 0), ("gaussian", 1)):
            h = 0.3
            res = {}
            for name, k in kernels.items():
                res[name] = _time(lambda k=k: k(x, y, x, h, args.degree, code), args.repeat)
            base = res["python"][0]
            for name, (t, _) in res.items():
                print(f"{name:>9} {fam:>13} {n:>6} {t:>10.5f} {base / t:>8.1f}")
            if "compiled" in res:
                a, b = res["python"][1][0], res["compiled"][1][0]
                assert np.allclose(a, b, rtol=1e-10, atol=1e-10), "backends disagree"


if __name__ == "__main__":
    main()
