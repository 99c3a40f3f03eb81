"""Compare the compiled and numpy kernel backends.

Run ``python benchmarks/bench_kernels.py``.  Kernel timings call each
backend module directly; the end-to-end solve runs in a subprocess per
backend, with ``FRICTIONHJB_PURE_PYTHON=1`` selecting the fallback.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from frictionhjb.kernels import backends

SOLVE = (
    "import time; from frictionhjb import toy, solve_value, BACKEND; "
    "s = toy.toy_scenario(h={h}, delta={h}); t = time.perf_counter(); solve_value(s); "
    "print(BACKEND, time.perf_counter() - t)"
)


def kernel_cases(n, K, seed=0):
    rng = np.random.default_rng(seed)
    inf = rng.random(n) < 0.1
    v = np.where(inf, np.inf, rng.normal(size=n))
    pts = rng.uniform(-1.0, 0.1 * n, n * K)
    cand = rng.uniform(-3, 3, size=(n, K))
    ob, obi = rng.normal(size=n), rng.random(n) < 0.5
    m = 3
    bps = np.sort(rng.uniform(-1, 1, m))
    slopes = np.sort(rng.normal(size=(n, m + 1)), axis=1)
    y, q = rng.normal(size=n) * 2, rng.uniform(0, 1, n)
    return {
        "interp_1d": lambda mod: mod.interp_1d(v, inf, 0.0, 0.1, pts, 1 - 1e-6),
        "sl_min_1d": lambda mod: mod.sl_min_1d(v, inf, -1.0, 0.1, cand, 0.05, ob, obi, 1 - 1e-6),
        "prox_pwl": lambda mod: mod.prox_pwl(y, slopes, bps, q),
    }


def best_of(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=2501, help="grid nodes per kernel call")
    p.add_argument("--K", type=int, default=7, help="candidates per node")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--solve-h", type=float, default=5e-3, help="toy grid spacing for the end-to-end solve")
    args = p.parse_args(argv)

    mods = backends()
    print(f"{'kernel':<12}" + "".join(f"{b:>14}" for b in mods) + f"{'speedup':>10}")
    for name, fn in kernel_cases(args.n, args.K).items():
        t = {b: best_of(lambda m=m: fn(m), args.repeat) for b, m in mods.items()}
        ratio = t["python"] / t["cython"] if "cython" in t else float("nan")
        print(f"{name:<12}" + "".join(f"{1e3 * t[b]:>12.3f}ms" for b in mods) + f"{ratio:>9.1f}x")

    code = SOLVE.format(h=args.solve_h)
    for pure in ("0", "1"):
        env = dict(os.environ, FRICTIONHJB_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"solve_value toy h={args.solve_h:g} [{backend}]: {float(secs):.2f} s")


if __name__ == "__main__":
    main()
