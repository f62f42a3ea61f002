"""Throughput comparison of the compiled and pure-Python stepping kernels.

Runs the same closed-loop simulation (fixed gains, static duty cycle,
trigger/reset bookkeeping enabled) through both kernel implementations and
reports steps per second.  Usage::

    python3 benchmarks/bench_loop.py [n_steps]
"""

import sys
import time

import numpy as np

from ebgtune._loop_py import run_span as run_span_py
from ebgtune.plant import PlantParams

try:
    from ebgtune._loop_cy import run_span as run_span_cy
except ImportError:
    run_span_cy = None

PP = PlantParams()
ARGS = dict(kp=6.0, ki=0.08, kd=0.0, u_min=0.0, u_max=10.0, load_w=4000.0,
            t_set=298.15, t_z_supply=292.65, theta_h=0.5, theta_l=-0.5,
            t_w=20.0, dt=0.1)


def simulate(run_span, n, collect_trace):
    sv = np.array([298.15, 292.65, 0.0, 0.0, 0.0])
    pp = np.array([PP.c_t, PP.c_z, PP.q_max, PP.cp, PP.k_amb, PP.t_ambient,
                   PP.chiller_gain, PP.valve_tau])
    ev = np.zeros(8)
    ev[2] = -1.0
    trace = np.zeros((n if collect_trace else 1, 8))
    mb = np.full(1, 298.15)
    i = 0
    while i < n:
        reason, i = run_span(sv, pp, ev, trace, collect_trace, mb, 0,
                             ARGS["kp"], ARGS["ki"], ARGS["kd"],
                             ARGS["u_min"], ARGS["u_max"], ARGS["load_w"],
                             ARGS["t_set"], ARGS["t_z_supply"],
                             ARGS["theta_h"], ARGS["theta_l"], ARGS["t_w"],
                             ARGS["dt"], i, n)
        if reason == 1:  # trigger: open an event window
            ev[0] = 1.0
            ev[2] = -1.0
            ev[3:6] = 0.0
            ev[6], ev[7] = np.inf, -np.inf
        elif reason == 2:  # reset: close it
            ev[0] = 0.0
            ev[2] = -1.0
        else:
            break
    return sv


def bench(label, run_span, n, collect_trace, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        simulate(run_span, n, collect_trace)
        best = min(best, time.perf_counter() - t0)
    rate = n / best
    print(f"{label:<22} {n:>9} steps  {best * 1000:8.1f} ms  "
          f"{rate / 1e6:6.2f} M steps/s")
    return rate


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    print(f"kernel benchmark, {n} simulation steps (dt={ARGS['dt']} s), "
          f"best of 3\n")
    for collect_trace in (False, True):
        suffix = "with trace" if collect_trace else "no trace"
        py_rate = bench(f"pure python ({suffix})", run_span_py, n, collect_trace)
        if run_span_cy is not None:
            cy_rate = bench(f"cython ({suffix})", run_span_cy, n, collect_trace)
            print(f"  speedup: {cy_rate / py_rate:.1f}x\n")
        else:
            print("  compiled kernel unavailable; skipping comparison\n")


if __name__ == "__main__":
    main()
