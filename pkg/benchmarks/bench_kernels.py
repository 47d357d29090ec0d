"""Time each hot kernel on the numba and numpy backends.

Usage: python3 benchmarks/bench_kernels.py [--scale 1.0] [--repeat 3] [--json out.json]

Each kernel runs once per backend to warm up (numba compiles then), then
the best of ``--repeat`` timed calls is reported.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from esnrl import _accel, kernels
from esnrl._accel import use_backend


def _cases(scale: float):
    gen = np.random.default_rng(0)
    n = 300
    steps = max(10, int(2000 * scale))
    online_steps = max(10, int(500 * scale))
    m = 100
    A = gen.uniform(-0.05, 0.05, (n, n))
    A /= np.linalg.norm(A, 2)
    c_obs = gen.uniform(-0.05, 0.05, (n, 1))
    c_act = gen.uniform(-0.05, 0.05, (n, 1))
    zeta = gen.uniform(-0.05, 0.05, n)
    U = gen.standard_normal((steps, n)) * 0.05
    X = kernels.relu_run.fallback(A, U, np.zeros(n))
    obs = gen.standard_normal((online_steps, 1))
    cands = gen.standard_normal((online_steps, m, 1))
    rewards = gen.standard_normal(online_steps)
    alphas = 1.0 / (100.0 + np.arange(1, online_steps + 1))
    Xo = np.ascontiguousarray(X[:online_steps])
    ckpt = np.array([0, online_steps], dtype=np.int64)
    idx = np.arange(online_steps, dtype=np.int64)
    W = gen.standard_normal(n) * 0.01
    noise = gen.standard_normal(max(100, int(10**6 * scale)))
    return {
        "relu_run": (kernels.relu_run, (A, U, np.zeros(n))),
        "candidate_values": (kernels.candidate_values,
                             (X[1], c_act, W, cands[0])),
        "online_sweep": (kernels.online_sweep,
                         (A, c_obs, c_act, zeta, Xo, obs, cands, rewards, alphas, 0.37,
                          np.zeros(n), ckpt, 1e6)),
        "td_errors": (kernels.td_errors,
                      (A, c_obs, c_act, zeta, Xo, obs, cands, rewards, 0.37, W, idx)),
        "ar1_path": (kernels.ar1_path, (0.67, 1.0, noise, 0.0)),
        "bee_el_integrate": (kernels.bee_el_integrate,
                             (1e-5, 0.1, 0.5, 2 * np.pi / 50, -1.0, 1.0, 0.0, 0.0,
                              max(1.0, 250.0 * scale), 1e-8, 1e-8, 1e-6, 1e-12, 1e-12,
                              2_000_000)),
    }


def _best(fn, args, repeat):
    fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def bench(scale: float = 1.0, repeat: int = 3, only=None) -> list:
    backends = ["numpy"] + (["numba"] if _accel.NUMBA_AVAILABLE else [])
    rows = []
    for name, (fn, args) in _cases(scale).items():
        if only and name not in only:
            continue
        row = {"kernel": name}
        for b in backends:
            with use_backend(b):
                row[b] = _best(fn, args, repeat)
        if "numba" in row:
            row["speedup"] = row["numpy"] / row["numba"]
        rows.append(row)
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="problem size multiplier")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the rows to this file")
    args = ap.parse_args(argv)
    rows = bench(args.scale, args.repeat)
    print(f"{'kernel':<18}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for r in rows:
        nb = f"{r['numba']:12.4f}" if "numba" in r else f"{'n/a':>12}"
        sp = f"{r['speedup']:9.1f}x" if "speedup" in r else f"{'':>10}"
        print(f"{r['kernel']:<18}{r['numpy']:12.4f}{nb}{sp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
