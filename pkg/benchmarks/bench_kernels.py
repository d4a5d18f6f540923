"""Compiled vs numpy Yee kernels.

Times complete solver runs (impedance sphere, both field updates and the
boundary correction) on a few grid sizes with every available backend,
checks that the recorded s(t) agree, and prints ns per cell-update.

    python benchmarks/bench_kernels.py [--dx 0.05 0.04 0.03] [--T 0.6] [--repeat 3]
"""

import argparse
import time

import numpy as np

from tdenclosure.core import (ConstantImpedance, GridSpec, MediumParams, Obstacle, Pulse, Scenario,
                              SourceSpec, Sphere, TimeSpec)
from tdenclosure.solver import build_grid, run
from tdenclosure.solver.kernels import BACKEND, BACKENDS


def scenario(dx, T):
    pulse = Pulse("ramp_exp", t_c=0.03)
    srcs = (SourceSpec((0, 0, 0), 0.1, (0, 1, 0), pulse), SourceSpec((0, 0, 0), 0.1, (0, 0, 1), pulse))
    return Scenario(MediumParams(), srcs, Obstacle(Sphere((1.0, 0, 0), 0.3), ConstantImpedance(2.0)),
                    GridSpec(dx), TimeSpec(T))


def bench(sc, backend, repeat):
    g = build_grid(sc)
    best, rec = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        rec = run(sc, True, 0, grid=g, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, rec, g


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dx", type=float, nargs="+", default=[0.05, 0.04, 0.03])
    ap.add_argument("--T", type=float, default=0.6)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    names = sorted(BACKENDS)
    print(f"backends: {names} (import-time default: {BACKEND})")
    print(f"{'dx':>6} {'cells':>10} {'steps':>6} " + " ".join(f"{n + ' s':>10} {'ns/cell':>8}"
                                                          for n in names) + "   speedup  max|ds|/max|s|")
    for dx in args.dx:
        sc = scenario(dx, args.T)
        out = {n: bench(sc, n, args.repeat) for n in names}
        g = out[names[0]][2]
        cells = int(np.prod(g.dims))
        row = f"{dx:6.3f} {cells:10d} {sc.n_steps:6d} "
        for n in names:
            t = out[n][0]
            row += f"{t:10.3f} {1e9 * t / (cells * sc.n_steps):8.2f} "
        if "cython" in out:
            ref = out["numpy"][1].values
            diff = np.max(np.abs(out["cython"][1].values - ref)) / max(np.max(np.abs(ref)), 1e-300)
            row += f"  {out['numpy'][0] / out['cython'][0]:7.1f}x  {diff:.1e}"
        print(row)


if __name__ == "__main__":
    main()
