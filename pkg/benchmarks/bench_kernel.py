"""Compare the compiled and pure-Python RK4 kernels on an encoding drive.

Usage::

    python benchmarks/bench_kernel.py [--slots 1] [--repeat 3]

Reports wall time per run, integration steps per second, the speedup and
the largest relative difference between the two trajectories.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from injqkd.config import RunConfig
from injqkd.encoder import build_drive
from injqkd.laser import _backend
from injqkd.laser.model import integrate, relax_to_bias


def setup(n_slots: int):
    symbols = ["X0", "Z0", "Z1"]
    rc = RunConfig.from_dict({"sequence": [symbols[k % 3] for k in range(n_slots)]})
    dt = rc["dt_ps"] * 1e-12
    levels = rc.drive_levels()
    master, slave = rc.master_params(), rc.slave_params()
    drives = build_drive(rc.sequence(), rc.timing(), levels, dt)
    init = (relax_to_bias(master, levels.master_bias, 1e-9, dt),
            relax_to_bias(slave, levels.slave_bias, 1e-9, dt))
    return (master, slave, rc.injection(), *drives, init, dt), len(drives[0].samples)


def time_backend(name: str, args, repeat: int):
    best, out = float("inf"), None
    with _backend.using(name):
        for _ in range(repeat):
            t0 = time.perf_counter()
            out = integrate(*args)
            best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=1, help="encoded slots to integrate")
    ap.add_argument("--repeat", type=int, default=3, help="runs per backend (best is kept)")
    args = ap.parse_args(argv)

    call, n_steps = setup(args.slots)
    print(f"{args.slots} slot(s), {n_steps} steps at dt = {call[-1] * 1e12:g} ps")
    if _backend.compiled is None:
        print("compiled kernel not built; only the Python kernel is available")
        t, _ = time_backend("python", call, 1)
        print(f"python  {t:9.3f} s  {n_steps / t:12.0f} steps/s")
        return 0

    t_c, (mc, sc) = time_backend("cython", call, args.repeat)
    t_p, (mp, sp) = time_backend("python", call, max(1, args.repeat // 3))
    diff = max(float(np.max(np.abs(a.q_series - b.q_series) / np.maximum(np.abs(b.q_series), 1.0)))
               for a, b in ((mc, mp), (sc, sp)))
    print(f"cython  {t_c:9.3f} s  {n_steps / t_c:12.0f} steps/s")
    print(f"python  {t_p:9.3f} s  {n_steps / t_p:12.0f} steps/s")
    print(f"speedup {t_p / t_c:9.1f}x   max relative difference {diff:.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
