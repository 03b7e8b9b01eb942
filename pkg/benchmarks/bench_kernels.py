"""Compiled vs numpy kernel timings on the hot trajectory operations.

Run:  python benchmarks/bench_kernels.py [--L 12 16] [--repeat 200]

Times apply_local (2-site and 3-site), apply_local_norm2, and expect_local
on a random state for both backends, then a full trajectory on each. The
compiled core usually wins by 3-10x on the small-L sizes the acceptance
suite uses; the gap narrows for large L where numpy's matmul dominates.
"""

import argparse
import importlib
import os
import sys
import time

import numpy as np


def load_backend(name):
    os.environ["FFCONTROL_KERNELS"] = name
    for mod in [m for m in sys.modules if m.startswith("ffcontrol")]:
        del sys.modules[mod]
    pkg = importlib.import_module("ffcontrol._kernels")
    assert pkg.BACKEND == ("compiled" if name == "c" else "python"), pkg.BACKEND
    return pkg


def time_op(fn, repeat):
    fn()  # warm
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_kernels(pkg, L, repeat, rng):
    N = 2
    dim = N**L
    amps = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    amps /= np.linalg.norm(amps)
    amps = np.ascontiguousarray(amps)
    out = np.empty_like(amps)
    U2 = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))[0]
    U3 = np.linalg.qr(rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)))[0]
    P = np.diag([1.0, 0, 0, 1.0]).astype(complex)
    rows = {}
    rows["apply 2-site"] = time_op(lambda: pkg.apply_local(amps, U2, (3, 4), L, N, out), repeat)
    rows["apply 3-site"] = time_op(lambda: pkg.apply_local(amps, U3, (2, 3, 4), L, N, out), repeat)
    rows["norm2 2-site"] = time_op(lambda: pkg.apply_local_norm2(amps, P, (3, 4), L, N, out), repeat)
    rows["expect 2-site"] = time_op(lambda: pkg.expect_local(amps, P, (3, 4), L, N), repeat)
    return rows


def bench_trajectory(L, n_traj):
    from ffcontrol.protocols import ProtocolSpec
    from ffcontrol.trajectory import TrajectoryConfig, run_trajectory

    proto = ProtocolSpec("swap2", L, initial_kind="neel")
    cfg = TrajectoryConfig(proto, t_max=50.0, master_seed=1, record_entropy=False)
    t0 = time.perf_counter()
    for i in range(n_traj):
        ts = run_trajectory(cfg.for_index(i))
    el = (time.perf_counter() - t0) / n_traj
    return el, int(ts.events_count[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--L", type=int, nargs="+", default=[8, 12])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--traj", type=int, default=5)
    args = ap.parse_args()

    results = {}
    for name in ("py", "c"):
        try:
            pkg = load_backend(name)
        except ImportError:
            print(f"[{name}] extension not built; skipping")
            continue
        rng = np.random.default_rng(0)
        for L in args.L:
            rows = bench_kernels(pkg, L, args.repeat, rng)
            el, ev = bench_trajectory(L, args.traj)
            rows[f"trajectory ({ev} events)"] = el
            results[(name, L)] = rows

    for L in args.L:
        print(f"\nL = {L}")
        have = [n for n in ("py", "c") if (n, L) in results]
        ops = list(results[(have[0], L)])
        width = max(len(op) for op in ops)
        for op in ops:
            line = f"  {op:<{width}}"
            for name in have:
                line += f"  {name}: {results[(name, L)][op] * 1e6:9.1f} us"
            if len(have) == 2:
                ratio = results[("py", L)][op] / results[("c", L)][op]
                line += f"  speedup {ratio:4.1f}x"
            print(line)


if __name__ == "__main__":
    main()
