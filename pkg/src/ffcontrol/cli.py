"""Command-line front end.

Subcommands: trajectory, walk, oracle, fit, compare, target. Every run with
a seed is deterministic across invocations and worker counts; list-valued
flags expand to Cartesian sweeps written one file per combination. Exit
codes: 0 ok, 2 config error, 3 numerical failure.
"""

import argparse
import itertools
import os
import sys

import numpy as np

from .analysis import (
    dicke_entropy,
    fit_cutoff_collapse,
    fit_exponential_tail,
    fit_power_law,
)
from .channel import evolve_channel
from .io import read_table, write_ensemble, write_fit, write_sidecar, write_table
from .protocols import ProtocolSpec, target_state
from .trajectory import TrajectoryConfig, default_grid, run_ensemble
from .walk import (
    build_generator,
    crossover_delta,
    dispersion_asymptotics,
    evolve,
    mu_exponent,
    neel_profile,
    nearest_neighbor_generator,
    smallest_eigenvalue,
    stationary_noisy,
)


class ConfigError(Exception):
    pass


def _floats(text):
    return [float(tok) for tok in text.split(",") if tok]


def _ints(text):
    return [int(tok) for tok in text.split(",") if tok]


def _workers(args):
    if getattr(args, "workers", None):
        return args.workers
    env = os.environ.get("FFCONTROL_WORKERS")
    return int(env) if env else 1


def _protocol(args, L, delta=None, kappa=0.0, eta=0.0):
    try:
        proto = ProtocolSpec(
            args.family,
            L,
            delta=delta,
            kappa=kappa,
            eta=eta,
            initial_kind=args.initial,
        )
        proto.initial()  # family/L/kind mismatches surface before any work
        return proto
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _sweep_paths(out, combos, tags):
    """One output path per sweep point; multi-point sweeps need a directory.
    A single point writes to `out` directly unless it names a directory."""
    if len(combos) == 1 and not (out.endswith(os.sep) or os.path.isdir(out)):
        return [out]
    os.makedirs(out, exist_ok=True)
    paths = []
    for combo in combos:
        stem = "_".join(f"{k}{v:g}" if v is not None else f"{k}nn" for k, v in zip(tags, combo))
        paths.append(os.path.join(out, stem + ".csv"))
    return paths


def cmd_trajectory(args):
    deltas = _floats(args.delta) if args.delta is not None else [None]
    combos = list(itertools.product(args.L, deltas, args.kappa, args.eta))
    paths = _sweep_paths(args.out, combos, ("L", "delta", "kappa", "eta"))
    workers = _workers(args)
    for (L, delta, kappa, eta), path in zip(combos, paths):
        proto = _protocol(args, L, delta, kappa, eta)
        cfg = TrajectoryConfig(
            proto,
            t_max=args.tmax,
            master_seed=args.seed,
            record_entropy=args.entropy,
            record_j2=args.j2,
        )
        stats = run_ensemble(cfg, args.traj, workers=workers)
        write_ensemble(path, stats, cfg)
        print(path)
    return 0


def _walk_generator(args, L, delta):
    eta = getattr(args, "eta", 0.0)
    if args.nn:
        return nearest_neighbor_generator(L, lam=args.lam, eta=eta, kappa=args.kappa)
    if delta is None:
        raise ConfigError("--delta is required unless --nn is set")
    return build_generator(args.d, L, delta, lam=args.lam, eta=eta, kappa=args.kappa)


def cmd_walk(args):
    mode = args.mode
    if mode == "crossover":
        dc = crossover_delta(d=args.d, L=args.L[0])
        print(f"crossover delta = {dc:.6g}")
        return 0
    if mode == "dispersion":
        delta = (_floats(args.delta) or [None])[0]
        if delta is None:
            raise ConfigError("--delta is required for dispersion")
        q, Dq, slope, tag = dispersion_asymptotics(delta, L=args.L[0])
        print(f"small-q slope = {slope:.4f} ({tag})")
        if args.out:
            write_table(
                args.out,
                {"q": q, "D_q": Dq},
                {"delta": delta, "L": args.L[0], "slope": slope, "regime": tag},
            )
        return 0
    if mode == "evolve":
        if args.d != 1:
            raise ConfigError("--mode evolve writes chain profiles; --d must be 1")
        L = args.L[0]
        delta = (_floats(args.delta) or [None])[0] if args.delta else None
        gen = _walk_generator(args, L, delta)
        P0 = neel_profile(L) if args.profile == "neel" else np.ones(gen.dim)
        grid = default_grid(args.tmax)
        traj = evolve(gen, P0, grid)
        cols = {"time": grid}
        for j in range(traj.shape[1]):
            cols[f"P_{int(gen.reps[j, 0])}"] = traj[:, j]
        cols["sum_P"] = traj.sum(axis=1)
        meta = {"L": L, "delta": delta, "nn": bool(args.nn), "lam": args.lam,
                "kappa": args.kappa, "profile": args.profile}
        write_table(args.out, cols, meta)
        print(args.out)
        return 0
    if mode == "stationary":
        L = args.L[0]
        delta = (_floats(args.delta) or [None])[0] if args.delta else None
        if args.eta <= 0:
            raise ConfigError("--mode stationary needs --eta > 0")
        gen = _walk_generator(args, L, delta)
        P = stationary_noisy(gen)
        if args.d == 1:
            cols = {"r": gen.reps[:, 0].astype(np.int64), "P": P}
        else:
            cols = {
                "rx": gen.reps[:, 0].astype(np.int64),
                "ry": gen.reps[:, 1].astype(np.int64),
                "P": P,
            }
        meta = {"L": L, "d": args.d, "delta": delta, "eta": args.eta, "lam": args.lam}
        if args.out:
            write_table(args.out, cols, meta)
            print(args.out)
        else:
            print(f"P_1 = {P[0]:.10g}  max P = {P.max():.10g}")
        return 0

    # tau / mu sweeps over (delta, L)
    deltas = _floats(args.delta) if args.delta else [None]
    rows = {"delta": [], "L": [], "d": [], mode: []}
    for delta, L in itertools.product(deltas, args.L):
        if mode == "tau":
            gen = _walk_generator(args, L, delta)
            val = smallest_eigenvalue(gen)
        else:
            if delta is None and not args.nn:
                raise ConfigError("--delta is required for --mode mu (or pass --nn)")
            val = mu_exponent(0.0 if delta is None else delta, L, d=args.d,
                              lam=args.lam, kappa=args.kappa, nn=args.nn)
        rows["delta"].append(np.nan if delta is None else delta)
        rows["L"].append(L)
        rows["d"].append(args.d)
        rows[mode].append(val)
        dtag = "nn" if delta is None else f"{delta:g}"
        print(f"delta={dtag} L={L} d={args.d} {mode}={val:.10g}")
    if args.out:
        cols = {k: np.asarray(v) for k, v in rows.items()}
        cols["L"] = cols["L"].astype(np.int64)
        cols["d"] = cols["d"].astype(np.int64)
        write_table(args.out, cols, {"lam": args.lam, "kappa": args.kappa})
    return 0


def cmd_oracle(args):
    L = args.L[0]
    if L > 10:
        raise ConfigError("density-matrix oracle is dense; use --L <= 10")
    proto = _protocol(args, L, None, args.kappa[0], args.eta[0])
    grid = default_grid(args.tmax)
    series, _ = evolve_channel(proto, grid, record_entropy=args.entropy)
    cols = {"time": grid, "mean_P": series["mean_P"], "mean_Sz": series["mean_Sz"],
            "mean_entropy": series["mean_entropy"], "mean_J2": series["mean_J2"]}
    meta = {"family": proto.family, "L": L, "kappa": proto.kappa, "eta": proto.eta,
            "initial_kind": proto.initial_kind, "t_max": args.tmax}
    write_table(args.out, cols, meta)
    write_sidecar(args.out, meta)
    print(args.out)
    return 0


def _load_series(path, column):
    cols, meta = read_table(path)
    if column not in cols:
        raise ConfigError(f"{path}: no column {column!r}")
    return cols["time"], cols[column], meta


def cmd_fit(args):
    if args.mode == "collapse":
        sizes, series = [], []
        for path in args.series:
            t, v, meta = _load_series(path, args.column)
            if "L" not in meta:
                raise ConfigError(f"{path}: metadata lacks L (needed for collapse)")
            sizes.append(meta["L"])
            series.append((t, v))
        order = np.argsort(sizes)
        fit = fit_cutoff_collapse(
            [sizes[i] for i in order], [series[i] for i in order]
        )
    elif args.mode == "powerlaw":
        if args.window is None:
            raise ConfigError("--window t_lo,t_hi is required for powerlaw")
        t, v, _ = _load_series(args.series[0], args.column)
        fit = fit_power_law(t, v, tuple(args.window))
    else:  # tail
        import json

        t, v, _ = _load_series(args.series[0], args.column)
        t_c, t_c_err = fit_exponential_tail(t, v)
        print(f"t_c = {t_c:.6g} +- {t_c_err:.2g}")
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(json.dumps({"method": "exponential tail",
                                     "t_c": t_c, "t_c_err": t_c_err}) + "\n")
        return 0
    print(f"z = {fit.exponent:.4f} +- {fit.exponent_err:.2g} ({fit.method})")
    if args.out:
        write_fit(args.out, fit)
    return 0


def _comparable(path, window):
    """Series for cross-comparison: total defect weight L*mean_P for ensemble
    tables, the P_1 column for walk profiles."""
    cols, meta = read_table(path)
    t = cols["time"]
    if "P_1" in cols:
        v = cols["P_1"]
    elif "mean_P" in cols:
        if "L" not in meta:
            raise ConfigError(f"{path}: metadata lacks L")
        v = meta["L"] * cols["mean_P"]
    else:
        raise ConfigError(f"{path}: no comparable column (want P_1 or mean_P)")
    if window and (t[0] > window[0] or t[-1] < window[1]):
        raise ConfigError(
            f"{path}: grid [{t[0]:g}, {t[-1]:g}] does not cover the window"
        )
    return t, v


def cmd_compare(args):
    window = tuple(args.window) if args.window else None
    tq, vq = _comparable(args.quantum, window)
    tr, vr = _comparable(args.reference, window)
    mask = np.ones(len(tq), bool)
    if window:
        mask = (tq >= window[0]) & (tq <= window[1])
    ref = np.interp(tq[mask], tr, vr)
    dev = np.abs(vq[mask] - ref) / np.maximum(np.abs(ref), 1e-300)
    print(f"max relative deviation  = {dev.max():.6g}")
    print(f"mean relative deviation = {dev.mean():.6g}")
    if args.out:
        write_table(
            args.out,
            {"time": tq[mask], "quantum": vq[mask], "reference": ref,
             "rel_dev": dev},
            {"quantum": args.quantum, "reference": args.reference},
        )
    return 0


def cmd_target(args):
    L = args.L[0]
    try:
        tgt = target_state(args.kind, L, k=args.k)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    vec = tgt.vector
    from .state import schmidt_entropy

    S = schmidt_entropy(vec, L // 2)
    print(f"{args.kind}: L={L} dim={len(vec.amps)} half-chain entropy={S:.10g} nats")
    if args.kind == "dicke":
        k = L // 2 if args.k is None else args.k
        print(f"closed form: {dicke_entropy(L, k, L // 2):.10g} nats")
    if args.out:
        idx = np.nonzero(np.abs(vec.amps) > 1e-15)[0]
        write_table(
            args.out,
            {"basis_index": idx.astype(np.int64),
             "re": vec.amps[idx].real, "im": vec.amps[idx].imag},
            {"kind": args.kind, "L": L, "entropy": S},
        )
    return 0


def _add_protocol_flags(sub):
    sub.add_argument("--family", default="swap2",
                     choices=("swap2", "swap3", "fredkin", "motzkin"))
    sub.add_argument("--initial", default="default",
                     help="initial product state: default|neel|zeros|polarized")


def build_parser():
    par = argparse.ArgumentParser(
        prog="ffcontrol",
        description="Measurement-feedback steering simulator and walk solvers",
    )
    subs = par.add_subparsers(dest="cmd", required=True)

    tr = subs.add_parser("trajectory", help="run a trajectory ensemble sweep")
    _add_protocol_flags(tr)
    tr.add_argument("--L", type=_ints, required=True, help="chain lengths, comma separated")
    tr.add_argument("--delta", default=None, help="range exponents (long-range swap)")
    tr.add_argument("--kappa", type=_floats, default=[0.0])
    tr.add_argument("--eta", type=_floats, default=[0.0])
    tr.add_argument("--tmax", type=float, default=100.0)
    tr.add_argument("--traj", type=int, default=1000)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--workers", type=int, default=None)
    tr.add_argument("--entropy", action="store_true", default=None)
    tr.add_argument("--no-entropy", dest="entropy", action="store_false")
    tr.add_argument("--j2", action="store_true")
    tr.add_argument("--out", required=True,
                    help="CSV path (single point) or directory (sweep)")
    tr.set_defaults(func=cmd_trajectory)

    wk = subs.add_parser("walk", help="absorbing-walk spectra and evolution")
    wk.add_argument("--mode", required=True,
                    choices=("tau", "mu", "evolve", "stationary", "crossover", "dispersion"))
    wk.add_argument("--delta", default=None, help="comma separated for sweeps")
    wk.add_argument("--L", type=_ints, default=[64])
    wk.add_argument("--d", type=int, default=1, choices=(1, 2))
    wk.add_argument("--lam", type=float, default=1.0)
    wk.add_argument("--kappa", type=float, default=0.0)
    wk.add_argument("--eta", type=float, default=0.0)
    wk.add_argument("--nn", action="store_true", help="nearest-neighbor rates")
    wk.add_argument("--tmax", type=float, default=100.0)
    wk.add_argument("--profile", default="neel", choices=("neel", "uniform"))
    wk.add_argument("--out", default=None)
    wk.set_defaults(func=cmd_walk)

    orc = subs.add_parser("oracle", help="exact density-matrix channel")
    _add_protocol_flags(orc)
    orc.add_argument("--L", type=_ints, required=True)
    orc.add_argument("--kappa", type=_floats, default=[0.0])
    orc.add_argument("--eta", type=_floats, default=[0.0])
    orc.add_argument("--tmax", type=float, default=30.0)
    orc.add_argument("--entropy", action="store_true")
    orc.add_argument("--out", required=True)
    orc.set_defaults(func=cmd_oracle)

    ft = subs.add_parser("fit", help="exponent extraction from CSV series")
    ft.add_argument("--mode", required=True, choices=("powerlaw", "tail", "collapse"))
    ft.add_argument("--series", nargs="+", required=True, help="input CSV file(s)")
    ft.add_argument("--column", default="mean_P")
    ft.add_argument("--window", type=_floats, default=None, help="t_lo,t_hi")
    ft.add_argument("--out", default=None)
    ft.set_defaults(func=cmd_fit)

    cp = subs.add_parser("compare", help="quantum ensemble vs walk prediction")
    cp.add_argument("--quantum", required=True)
    cp.add_argument("--reference", required=True)
    cp.add_argument("--window", type=_floats, default=None, help="t_lo,t_hi")
    cp.add_argument("--out", default=None)
    cp.set_defaults(func=cmd_compare)

    tg = subs.add_parser("target", help="dump target states and entropies")
    tg.add_argument("--kind", required=True,
                    choices=("dicke", "anomalous", "fredkin_stationary", "motzkin_ground"))
    tg.add_argument("--L", type=_ints, default=[8])
    tg.add_argument("--k", type=int, default=None)
    tg.add_argument("--out", default=None)
    tg.set_defaults(func=cmd_target)
    return par


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
