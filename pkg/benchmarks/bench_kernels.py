"""Compare the compiled and numpy kernel backends on lifts and pair scans.

    python benchmarks/bench_kernels.py [--sizes 256,1024] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from roughkit.gaussian import RngSpec, sample_bm
from roughkit.kernels import available_backends
from roughkit.path import dyadic_times


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="256,1024")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--dim", type=int, default=2)
    args = ap.parse_args()
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'kernel':<14}{'N':>6}{'level':>6}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        k = int(np.log2(n))
        x = sample_bm(dyadic_times(k), args.dim, RngSpec(1, 0))
        y = sample_bm(dyadic_times(k), args.dim, RngSpec(1, 1))
        t = x.times
        for level in (2, 3):
            res = {}
            for name, mod in backends.items():
                X = mod.lift_points(x.values[0], np.diff(x.values, axis=0), level)
                Y = mod.lift_points(y.values[0], np.diff(y.values, axis=0), level)
                res[name] = {
                    "lift": _best(lambda: mod.lift_points(x.values[0], np.diff(x.values, axis=0), level), args.repeat),
                    "holder_sup": _best(lambda: mod.holder_sup(X, Y, t, 2.5, level), args.repeat),
                    "pvar_dp": _best(lambda: mod.pvar_dp(X, Y, 2.5, level), args.repeat),
                }
            for kern in ("lift", "holder_sup", "pvar_dp"):
                row = [res[b][kern] for b in backends]
                speed = ""
                if "cython" in res:
                    speed = f"{res['python'][kern] / res['cython'][kern]:>9.1f}x"
                print(f"{kern:<14}{n:>6}{level:>6}" + "".join(f"{v * 1e3:>10.2f}ms" for v in row) + speed)


if __name__ == "__main__":
    main()
