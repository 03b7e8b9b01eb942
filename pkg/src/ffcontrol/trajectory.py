"""Continuous-time stochastic sampler of the measurement-feedback protocol.

One trajectory is a Gillespie chain: waiting times are exponential with
total rate R = L (1 + kappa); each event is either a projective defect
measurement (rate 1 per channel, feedback routed through the outcome
noise filter) or a bond scrambler with a fresh uniform phase (rate kappa
per bond).  Observables are recorded by carrying the state across each
grid time, so a record reflects the state strictly before any event at a
later clock reading.

The event loop works on raw amplitude buffers and calls the contraction
kernels directly; the operator objects are built once per protocol and
cached.  With eta = 0 a trajectory that has reached the dark sector (all
defect expectations below 1e-12) can never leave it, so the remaining
grid is filled without further linear algebra; event counts for the
frozen stretch are drawn from the exact Poisson law to keep the record
faithful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._kernels import apply_local, apply_local_norm2, expect_local
from .protocols import (
    ProtocolSpec,
    fredkin_cswap_projectors,
    noisy_outcome_filter,
    swap_projector,
)
from .rng import trajectory_rng
from .state import MeasurementRecord, QuditState, schmidt_entropy, sz_diagonal

__all__ = [
    "TrajectoryConfig",
    "TimeSeries",
    "EnsembleStats",
    "default_grid",
    "run_trajectory",
    "run_ensemble",
    "long_range_pair_sampler",
]


def default_grid(t_max, t_min=0.1, points_per_decade=30):
    """Log-spaced record times in (0, t_max], 30 points per decade."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    t_min = min(t_min, t_max)
    n = max(2, int(round(points_per_decade * math.log10(t_max / t_min))) + 1)
    grid = np.geomspace(t_min, t_max, n)
    grid[-1] = t_max
    return grid


@dataclass
class TrajectoryConfig:
    protocol: ProtocolSpec
    t_max: float
    record_grid: np.ndarray | None = None
    master_seed: int = 0
    trajectory_index: int = 0
    record_entropy: bool | None = None
    record_j2: bool = False
    keep_final_state: bool = False

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.record_grid is None:
            self.record_grid = default_grid(self.t_max)
        grid = np.asarray(self.record_grid, dtype=float)
        if grid.ndim != 1 or len(grid) == 0:
            raise ValueError("record grid must be a non-empty 1-D array")
        if np.any(np.diff(grid) < 0) or grid[0] <= 0 or grid[-1] > self.t_max:
            raise ValueError("record times must be sorted and lie in (0, t_max]")
        self.record_grid = grid
        if self.record_entropy is None:
            self.record_entropy = self.protocol.N == 2

    def for_index(self, idx: int) -> "TrajectoryConfig":
        return TrajectoryConfig(
            self.protocol, self.t_max, self.record_grid.copy(), self.master_seed,
            idx, self.record_entropy, self.record_j2, self.keep_final_state,
        )


@dataclass
class TimeSeries:
    times: np.ndarray
    order_param: np.ndarray
    entropy: np.ndarray
    Sz: np.ndarray
    J2: np.ndarray
    events_count: np.ndarray
    final_state: QuditState | None = None


@dataclass
class EnsembleStats:
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    n_traj: int
    stderr: np.ndarray = field(init=False)
    mean_entropy: np.ndarray | None = None
    mean_Sz: np.ndarray | None = None
    mean_J2: np.ndarray | None = None

    def __post_init__(self):
        self.stderr = np.sqrt(np.maximum(self.variance, 0.0) / max(self.n_traj, 1))


@lru_cache(maxsize=32)
def _distance_cdf(L, delta):
    """CDF over directed displacements r = 1 .. L-1 with gamma(min image)."""
    r = np.arange(1, L)
    d = np.minimum(r, L - r).astype(float)
    w = np.ones_like(d) if delta == 0 else d ** (-float(delta))
    w /= w.sum()
    return np.cumsum(w)


def long_range_pair_sampler(L, delta, rng):
    """Draw a measured pair (l, m): distance by the rate table, base uniform."""
    cdf = _distance_cdf(L, float(delta))
    r = 1 + int(np.searchsorted(cdf, rng.random(), side="right"))
    ell = int(rng.integers(L))
    return ell, (ell + r) % L


class _Engine:
    """Pre-built matrices and site tuples for one protocol; shared per worker."""

    def __init__(self, protocol: ProtocolSpec):
        self.protocol = protocol
        L, N = protocol.L, protocol.N
        self.L, self.N = L, N
        self.dim = N**L
        # per channel: a tuple of (projector, feedback) measurement sub-steps.
        # One step everywhere except the sequential CSWAP-pair variant.
        cswap_pair = (
            protocol.family == "fredkin"
            and protocol.fredkin_measurement_mode == "cswap-pair"
        )
        self.meas = []
        for a in range(protocol.n_channels):
            sites = protocol.support_for(a)
            fb = protocol.feedback(sites)
            if cswap_pair:
                pair = fredkin_cswap_projectors(sites[1], L)
                self.meas.append(tuple(
                    (pi.matrix, pi.support, fb.matrix, fb.support) for pi in pair
                ))
            else:
                proj = protocol.defect_projector(sites=sites, alpha=a)
                self.meas.append(
                    ((proj.matrix, proj.support, fb.matrix, fb.support),)
                )
        # order parameter always averages the kernel-complement projectors
        self.order_ops = [
            (protocol.defect_projector(alpha=a).matrix,
             protocol.support_for(a))
            for a in range(protocol.n_channels)
        ]
        self.pair_ops = {}
        if protocol.long_range:
            base = swap_projector(N, (0, 1)).matrix
            fb0 = protocol.feedback((0, 1))
            self.pair_proto = (base, fb0.matrix)
        from .state import swap_matrix

        self.swap = swap_matrix(N)
        self.sz_diag = sz_diagonal(L, N)
        self.j2_pairs = None
        if protocol.family == "swap2":
            self.j2_pairs = [
                (swap_projector(2, (i, j)).matrix, (i, j))
                for i in range(L) for j in range(i + 1, L)
            ]

    def order_param(self, amps):
        L, N = self.L, self.N
        acc = 0.0
        for mat, sites in self.order_ops:
            acc += expect_local(amps, mat, sites, L, N).real
        return acc / self.protocol.n_channels

    def j2(self, amps):
        L = self.L
        tot = 0.0
        for mat, sites in self.j2_pairs:
            tot += expect_local(amps, mat, sites, self.L, self.N).real
        return 0.25 * L * (L + 2) - 2.0 * tot


@lru_cache(maxsize=8)
def _engine_for(protocol: ProtocolSpec) -> _Engine:
    return _Engine(protocol)


def run_trajectory(cfg: TrajectoryConfig) -> TimeSeries:
    eng = _engine_for(cfg.protocol)
    proto = cfg.protocol
    L, N = eng.L, eng.N
    rng = trajectory_rng(cfg.master_seed, cfg.trajectory_index)

    state = proto.initial()
    amps = np.ascontiguousarray(state.amps)
    buf = np.empty_like(amps)

    kappa, eta = proto.kappa, proto.eta
    R = L * (1.0 + kappa)
    p_scr = kappa / (1.0 + kappa)
    long_range = proto.long_range
    freezable = eta == 0.0 and (kappa == 0.0 or proto.family in ("swap2", "swap3"))

    grid = cfg.record_grid
    n_rec = len(grid)
    order = np.zeros(n_rec)
    entropy = np.full(n_rec, np.nan)
    szv = np.zeros(n_rec)
    j2v = np.full(n_rec, np.nan)
    events = np.zeros(n_rec, dtype=np.int64)

    half = L // 2
    want_S = cfg.record_entropy
    want_J2 = cfg.record_j2 and eng.j2_pairs is not None

    def record(i):
        order[i] = eng.order_param(amps)
        szv[i] = float(np.sum(eng.sz_diag * (amps.real**2 + amps.imag**2)))
        if want_S:
            mat = amps.reshape(N**half, N ** (L - half))
            s2 = np.linalg.svd(mat, compute_uv=False) ** 2
            s2 = s2[s2 > 1e-14]
            entropy[i] = float(-np.sum(s2 * np.log(s2)))
        if want_J2:
            j2v[i] = eng.j2(amps)

    t = 0.0
    gi = 0
    n_events = 0
    frozen_at = -1
    while gi < n_rec:
        dt = rng.exponential(1.0 / R)
        t_next = t + dt
        while gi < n_rec and grid[gi] <= t_next:
            record(gi)
            events[gi] = n_events
            if freezable and order[gi] < 1e-12:
                frozen_at = gi
            gi += 1
            if frozen_at >= 0:
                break
        if frozen_at >= 0 or gi >= n_rec:
            break
        t = t_next
        n_events += 1
        if p_scr > 0.0 and rng.random() < p_scr:
            ell = int(rng.integers(L))
            sites = (ell, (ell + 1) % L)
            phi = rng.uniform(0.0, 2.0 * np.pi)
            U = (1j * math.sin(phi)) * eng.swap
            U[np.arange(N * N), np.arange(N * N)] += math.cos(phi)
            apply_local(amps, U, sites, L, N, out=buf)
            amps, buf = buf, amps
            continue
        if long_range:
            ell, m = long_range_pair_sampler(L, proto.delta, rng)
            sites = (ell, m)
            ops = eng.pair_ops.get(sites)
            if ops is None:
                pm, fm = eng.pair_proto
                fsites = (sites[0],) if proto.feedback_site_rule != "right" else (sites[1],)
                ops = ((pm, sites, fm, fsites),)
                eng.pair_ops[sites] = ops
            steps = ops
        else:
            alpha = int(rng.integers(L))
            steps = eng.meas[alpha]
        for pmat, psites, fmat, fsites in steps:
            p = apply_local_norm2(amps, pmat, psites, L, N, buf)
            if p < -1e-12 or p > 1.0 + 1e-12:
                raise RuntimeError(f"Born weight {p} outside [0, 1]")
            outcome = 1 if rng.random() < p else 0
            if outcome == 1:
                np.divide(buf, math.sqrt(p), out=amps)
            else:
                np.subtract(amps, buf, out=amps)
                nrm = np.linalg.norm(amps)
                if nrm < 1e-14:
                    raise RuntimeError("collapse onto a numerically null branch")
                amps /= nrm
            if eta > 0.0:
                fire = noisy_outcome_filter(
                    MeasurementRecord(psites, outcome, p if outcome else 1 - p, t),
                    eta, rng.random(),
                )
            else:
                fire = outcome == 1
            if fire:
                apply_local(amps, fmat, fsites, L, N, out=buf)
                amps, buf = buf, amps

    if frozen_at >= 0:
        # dark sector reached: state is a fixed point of every event branch,
        # only the event clock keeps ticking
        order[frozen_at + 1:] = order[frozen_at]
        szv[frozen_at + 1:] = szv[frozen_at]
        entropy[frozen_at + 1:] = entropy[frozen_at]
        j2v[frozen_at + 1:] = j2v[frozen_at]
        prev = grid[frozen_at]
        running = n_events
        for i in range(frozen_at + 1, n_rec):
            running += rng.poisson(R * (grid[i] - prev))
            events[i] = running
            prev = grid[i]

    final = None
    if cfg.keep_final_state:
        final = QuditState(L, N, amps, check=False)
    return TimeSeries(grid.copy(), order, entropy, szv, j2v, events, final)


def _block_sums(cfg: TrajectoryConfig, indices):
    """Accumulate sums over a contiguous index block, in index order."""
    n_rec = len(cfg.record_grid)
    s1 = np.zeros(n_rec)
    s2 = np.zeros(n_rec)
    se = np.zeros(n_rec)
    sz = np.zeros(n_rec)
    sj = np.zeros(n_rec)
    any_e = False
    any_j = False
    for idx in indices:
        ts = run_trajectory(cfg.for_index(idx))
        s1 += ts.order_param
        s2 += ts.order_param**2
        sz += ts.Sz
        if not np.all(np.isnan(ts.entropy)):
            se += ts.entropy
            any_e = True
        if not np.all(np.isnan(ts.J2)):
            sj += ts.J2
            any_j = True
    return s1, s2, se if any_e else None, sz, sj if any_j else None


def run_ensemble(cfg: TrajectoryConfig, n_traj: int, workers: int = 1,
                 block: int = 64) -> EnsembleStats:
    """Mean and variance of the order parameter over n_traj trajectories.

    Trajectory i uses the stream (master_seed, i); sums are accumulated per
    contiguous index block and blocks are combined in block order, so the
    result is bit-identical for any worker count.
    """
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    blocks = [range(b, min(b + block, n_traj)) for b in range(0, n_traj, block)]
    results = []
    if workers > 1 and len(blocks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_block_sums, cfg, list(b)) for b in blocks]
            results = [f.result() for f in futs]
    else:
        results = [_block_sums(cfg, b) for b in blocks]

    n_rec = len(cfg.record_grid)
    S1 = np.zeros(n_rec)
    S2 = np.zeros(n_rec)
    SE = np.zeros(n_rec)
    SZ = np.zeros(n_rec)
    SJ = np.zeros(n_rec)
    got_e = got_j = False
    for s1, s2, se, sz, sj in results:
        S1 += s1
        S2 += s2
        SZ += sz
        if se is not None:
            SE += se
            got_e = True
        if sj is not None:
            SJ += sj
            got_j = True
    mean = S1 / n_traj
    var = np.maximum(S2 / n_traj - mean**2, 0.0)
    return EnsembleStats(
        cfg.record_grid.copy(), mean, var, n_traj,
        mean_entropy=SE / n_traj if got_e else None,
        mean_Sz=SZ / n_traj,
        mean_J2=SJ / n_traj if got_j else None,
    )
