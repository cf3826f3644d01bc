"""Compiled vs pure-Python kernels on the workloads the toolkit actually runs.

    python benchmarks/bench_kernels.py [--repeat 3] [--seeds 64]
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from tlroa import kernels
from tlroa.config import ScenarioConfig
from tlroa.model import segment_params


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seeds", type=int, default=64, help="states per batch workload")
    args = ap.parse_args(argv)

    cfg = ScenarioConfig.load("builtin:case1")
    system = cfg.system()
    seg = cfg.post_fault_segment()
    p = segment_params(system.pll, system.grid, seg)
    eq1 = math.asin(p[4] * p[8] * p[5] / p[12])
    rng = np.random.default_rng(0)
    X = np.column_stack([eq1 + rng.uniform(-0.1, 0.1, args.seeds), rng.uniform(-0.05, 0.05, args.seeds)])

    work = {
        "rkf45 5 s trajectory": lambda b: b.rkf45(p, 0.0, 5.0, eq1 + 0.1, 0.0, 1.0, 1e-3, 1e-10, 1e-12, 1e-12,
                                                  0.01, 1e3, 1.0, 1.0, False),
        "rk4 5 s, h=1e-4": lambda b: b.rk4(p, 0.0, 5.0, eq1 + 0.1, 0.0, 1.0, 1e-4, 1e3, 1.0, 1.0, False),
        f"reverse endpoints x{args.seeds}": lambda b: b.endpoints(p, X, 2.25, -1.0, 1e-3, 1e-10, 1e-12, 1e-12,
                                                                  0.05, 1e3, 1.0, 1.0),
        f"settle x{args.seeds // 8}": lambda b: b.settle_many(p, X[: args.seeds // 8], eq1, 0.0, 1e-3, 0.1,
                                                               1000.0, 1e-3, 1e-10, 1e-12, 1e-12, math.inf,
                                                               1e3, 1.0, 1.0),
    }
    backends = kernels.backends()
    names = list(backends)
    print(f"{'workload':32s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in work.items():
        t = {n: _best(lambda: fn(b), args.repeat) for n, b in backends.items()}
        row = f"{label:32s}" + "".join(f"{t[n] * 1e3:10.2f}ms" for n in names)
        if "cython" in t:
            row += f"{t['python'] / t['cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
