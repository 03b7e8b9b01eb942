"""Post-processing: exponent fits, scaling collapse, closed-form reference
curves, target-state fidelities, and height-profile diagnostics.

All functions are pure and operate on plain arrays or the lightweight result
objects from the other modules.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln


@dataclass
class FitResult:
    exponent: float
    window: tuple
    goodness: float
    method: str
    exponent_err: float = float("nan")
    sizes: tuple = ()
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(
            {
                "method": self.method,
                "z": self.exponent,
                "z_err": self.exponent_err,
                "window": list(self.window),
                "goodness": self.goodness,
                "sizes": list(self.sizes),
            }
        )


def fit_power_law(times, values, window, stderr=None):
    """Weighted log-log slope fit; returns FitResult with z = -1/slope.

    Points with value <= 3*stderr are excluded (log-noise floor); requires
    at least 8 usable grid points in the window.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t_lo, t_hi = window
    mask = (times >= t_lo) & (times <= t_hi) & (values > 0)
    if stderr is not None:
        mask &= values > 3 * np.asarray(stderr, dtype=float)
    if mask.sum() < 8:
        raise ValueError("fewer than 8 usable points in fit window")
    x = np.log(times[mask])
    y = np.log(values[mask])
    if stderr is not None:
        w = (values[mask] / np.asarray(stderr)[mask]) ** 2
    else:
        w = np.ones_like(x)
    W = np.sum(w)
    xbar = np.sum(w * x) / W
    ybar = np.sum(w * y) / W
    sxx = np.sum(w * (x - xbar) ** 2)
    slope = np.sum(w * (x - xbar) * (y - ybar)) / sxx
    resid = y - (ybar + slope * (x - xbar))
    rms = float(np.sqrt(np.sum(w * resid**2) / W))
    slope_err = rms / np.sqrt(sxx / (W / len(x)))
    if slope == 0:
        raise ValueError("flat series; cannot form z = -1/slope")
    z = -1.0 / slope
    z_err = abs(slope_err / slope**2)
    return FitResult(z, (t_lo, t_hi), rms, "power-law slope", z_err)


def fit_exponential_tail(times, values, floor=1e-12, tail_start=None, min_points=5):
    """Fit values ~ A exp(-t/t_c) on the late-time tail; returns (t_c, t_c_err).

    The tail window defaults to the region where the curve has dropped below
    1/4 of its value at the earliest positive time, which lands past the
    power-law shoulder for all cases used here.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    ok = values > floor
    if tail_start is None:
        ref = values[ok][0] if ok.any() else 0.0
        below = ok & (values < ref / 4.0)
        if below.sum() < min_points:
            raise ValueError("exponential tail not resolved")
        tail_start = times[below][0]
    mask = ok & (times >= tail_start)
    if mask.sum() < min_points:
        raise ValueError("exponential tail not resolved")
    x = times[mask]
    y = np.log(values[mask])
    A = np.vstack([np.ones_like(x), x]).T
    coef, res, _, _ = np.linalg.lstsq(A, y, rcond=None)
    rate = -coef[1]
    if rate <= 0:
        raise ValueError("tail rate is not positive")
    n = mask.sum()
    dof = max(n - 2, 1)
    sigma2 = (res[0] / dof) if res.size else 0.0
    xvar = np.sum((x - x.mean()) ** 2)
    rate_err = np.sqrt(sigma2 / xvar) if xvar > 0 else 0.0
    t_c = 1.0 / rate
    return t_c, t_c_err_from_rate(rate, rate_err)


def t_c_err_from_rate(rate, rate_err):
    return rate_err / rate**2


def fit_cutoff_collapse(sizes, series_list, z_grid=None, tail_start=None):
    """Dynamical exponent from exponential cutoff times across system sizes.

    For each L, fits the tail rate 1/t_c(L), then regresses log t_c against
    log L. Also scans a z grid for the best rescaled-axis collapse (RMS
    spread between curves interpolated on common t/L^z); both numbers land
    in the result, the tail regression as the headline exponent.
    """
    sizes = np.asarray(sizes, dtype=float)
    if len(sizes) < 3:
        raise ValueError("need at least 3 system sizes")
    tcs, tc_errs = [], []
    for (times, values), L in zip(series_list, sizes):
        ts = tail_start(L) if callable(tail_start) else tail_start
        t_c, t_c_err = fit_exponential_tail(times, values, tail_start=ts)
        tcs.append(t_c)
        tc_errs.append(t_c_err)
    tcs = np.asarray(tcs)
    tc_errs = np.asarray(tc_errs)
    x = np.log(sizes)
    y = np.log(tcs)
    sy = np.clip(tc_errs / tcs, 1e-6, None)
    w = 1.0 / sy**2
    W = np.sum(w)
    xbar = np.sum(w * x) / W
    ybar = np.sum(w * y) / W
    sxx = np.sum(w * (x - xbar) ** 2)
    z = np.sum(w * (x - xbar) * (y - ybar)) / sxx
    z_err = float(np.sqrt(1.0 / sxx))
    resid = y - (ybar + z * (x - xbar))
    rms = float(np.sqrt(np.mean(resid**2)))

    if z_grid is None:
        z_grid = np.arange(1.5, 4.5 + 1e-9, 0.05)
    spread = [collapse_spread(sizes, series_list, zz) for zz in z_grid]
    z_collapse = float(z_grid[int(np.argmin(spread))])

    window = (float(min(tcs)), float(max(tcs)))
    res = FitResult(float(z), window, rms, "cutoff collapse", z_err, tuple(int(s) for s in sizes))
    res.extra["t_c"] = tcs.tolist()
    res.extra["t_c_err"] = tc_errs.tolist()
    res.extra["z_collapse"] = z_collapse
    res.extra["collapse_spread"] = float(np.min(spread))
    return res


def collapse_spread(sizes, series_list, z, n_grid=60):
    """RMS spread between curves plotted against t / L^z (log-log)."""
    rescaled = []
    for (times, values), L in zip(series_list, sizes):
        t = np.asarray(times, dtype=float) / float(L) ** z
        v = np.asarray(values, dtype=float)
        ok = v > 1e-12
        rescaled.append((np.log(t[ok]), np.log(v[ok])))
    lo = max(r[0][0] for r in rescaled)
    hi = min(r[0][-1] for r in rescaled)
    if hi <= lo:
        return np.inf
    grid = np.linspace(lo, hi, n_grid)
    curves = np.array([np.interp(grid, x, y) for x, y in rescaled])
    return float(np.sqrt(np.mean(np.var(curves, axis=0))))


def dicke_entropy(L, k, ell):
    """Closed-form block entanglement entropy (nats) of a Dicke state.

    S_ell = -sum_i p_i ln p_i with hypergeometric weights
    p_i = C(ell, i) C(L-ell, k-i) / C(L, k); log-gamma throughout, and the
    0 ln 0 = 0 convention for vanishing weights.
    """
    if not (0 <= k <= L and 0 <= ell <= L):
        raise ValueError("need 0 <= k <= L and 0 <= ell <= L")
    if ell == 0 or ell == L:
        return 0.0

    def lbinom(n, m):
        return gammaln(n + 1) - gammaln(m + 1) - gammaln(n - m + 1)

    total = 0.0
    for i in range(max(0, k - (L - ell)), min(ell, k) + 1):
        logp = lbinom(ell, i) + lbinom(L - ell, k - i) - lbinom(L, k)
        p = np.exp(logp)
        if p > 0:
            total -= p * logp
    return float(total)


def fidelity_to_target(state, target):
    """|<target|state>|^2; target may be a TargetState or a QuditState."""
    tvec = getattr(target, "vector", target)
    if tvec.L != state.L or tvec.N != state.N:
        raise ValueError("state and target dimensions do not match")
    ov = np.vdot(tvec.amps, state.amps)
    return float(abs(ov) ** 2)


def span_projection_weight(state, targets):
    """Weight of the state inside span{targets} (orthonormalized basis)."""
    vecs = [getattr(t, "vector", t).amps for t in targets]
    Q, _ = np.linalg.qr(np.column_stack(vecs))
    coeffs = Q.conj().T @ state.amps
    return float(np.sum(np.abs(coeffs) ** 2))


def motzkin_height_profile(digits, N=2):
    """Height profile of a spin configuration.

    Up steps ascend (+1), down steps descend (-1), spin-zero is flat, as in
    the worked example up,down,up,up,down,down -> /\\//\\\\. Returns
    (heights, m, is_matched): m is the absolute maximum (global maximum)
    of the profile, and is_matched says whether the profile closes at 0
    without dipping negative (the height-word property).
    """
    steps = {0: 1, 1: -1} if N == 2 else {0: 1, 1: 0, 2: -1}
    try:
        inc = [steps[int(d)] for d in digits]
    except KeyError:
        raise ValueError("invalid digit for local dimension") from None
    heights = np.cumsum(inc)
    m = int(max(0, heights.max())) if len(heights) else 0
    is_matched = bool(len(heights) and heights[-1] == 0 and heights.min() >= 0)
    return heights, m, is_matched


def synthetic_power_series(z, t_lo=1.0, t_hi=100.0, n=60, noise=0.0, rng=None):
    """Self-test helper: y = t^(-1/z) with optional log-normal noise."""
    t = np.geomspace(t_lo, t_hi, n)
    y = t ** (-1.0 / z)
    if noise > 0:
        rng = rng or np.random.default_rng(0)
        y = y * np.exp(noise * rng.normal(size=n))
    return t, y
