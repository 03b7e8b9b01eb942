"""Protocol families: measurement projectors, feedback unitaries, scrambling
gates, outcome-noise filters, and initial/target states.

Families:
    swap2   spin-1/2 chain, singlet projectors P = (1 - SWAP)/2, feedback
            sigma^z on the left measured site; nearest-neighbor or
            long-range pairs with rate ~ |r|^(-Delta).
    swap3   spin-1 analogue with the SU(3) antisymmetric projector and
            feedback exp(i pi/2 Z).
    fredkin spin-1/2 three-site operators F_l; the measured binary
            observable is {kernel of F_l} vs complement, feedback
            exp(i pi/2 sigma^z) on the center site.
    motzkin spin-1 two-site rank-3 projectors M_l, feedback on the left
            site.

The measurement outcome convention is uniform across families: outcome 1
means "defect detected" and triggers feedback (subject to the noise
filter); the order parameter averages the same defect projectors.
"""

from dataclasses import dataclass, replace
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .analysis import motzkin_height_profile
from .state import LocalOperator, QuditState, swap_matrix

FAMILIES = ("swap2", "swap3", "fredkin", "motzkin")

SIGMA_Z = np.diag([1.0, -1.0]).astype(np.complex128)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
Z_SPIN1 = np.diag([1.0, 0.0, -1.0]).astype(np.complex128)
# exp(i pi/2 Z) phase gates used as feedback
V_QUBIT = np.diag([1j, -1j]).astype(np.complex128)
V_SPIN1 = np.diag([1j, 1.0, -1j]).astype(np.complex128)


def swap_projector(N, sites):
    """Projector (1 - SWAP)/2 onto the antisymmetric subspace of a pair."""
    mat = 0.5 * (np.eye(N * N) - swap_matrix(N))
    return LocalOperator(tuple(sites), mat, "projector", N)


def scrambling_unitary(N, sites, phi):
    """exp(i phi SWAP) = cos(phi) + i sin(phi) SWAP."""
    mat = np.cos(phi) * np.eye(N * N) + 1j * np.sin(phi) * swap_matrix(N)
    return LocalOperator(tuple(sites), mat, "unitary", N)


@lru_cache(maxsize=None)
def _fredkin_matrices():
    """(F, K, Q): the 8x8 three-site operator, its kernel projector, and
    the complement (defect) projector."""
    I2 = np.eye(2)
    P = 0.5 * (np.eye(4) - swap_matrix(2))
    F = np.kron(I2 - SIGMA_Z, P) + np.kron(P, I2 + SIGMA_Z)
    evals, evecs = np.linalg.eigh(F)
    kernel = evecs[:, evals < 1e-10]
    K = kernel @ kernel.conj().T
    Q = np.eye(8) - K
    return F, K, Q


def fredkin_operator(ell, L):
    """The three-site operator F_ell on (ell-1, ell, ell+1) mod L."""
    F, _, _ = _fredkin_matrices()
    sites = ((ell - 1) % L, ell % L, (ell + 1) % L)
    return LocalOperator(sites, F, "hermitian-psd", 2)


def fredkin_kernel_projector(ell, L):
    _, K, _ = _fredkin_matrices()
    sites = ((ell - 1) % L, ell % L, (ell + 1) % L)
    return LocalOperator(sites, K, "projector", 2)


def fredkin_defect_projector(ell, L):
    _, _, Q = _fredkin_matrices()
    sites = ((ell - 1) % L, ell % L, (ell + 1) % L)
    return LocalOperator(sites, Q, "projector", 2)


def fredkin_cswap_projectors(ell, L):
    """The two projector factors of F_ell, each (1 - CSWAP)/2.

    F_ell = 2 (Pi_dn + Pi_up): Pi_dn swaps the right pair controlled on the
    left site being down, Pi_up swaps the left pair controlled on the right
    site being up. They do not commute; the sequential-measurement protocol
    fixes the order (Pi_dn first). Shared kernel with F_ell.
    """
    P = 0.5 * (np.eye(4) - swap_matrix(2))
    sites = ((ell - 1) % L, ell % L, (ell + 1) % L)
    pi_dn = LocalOperator(sites, np.kron(np.diag([0.0, 1.0]), P), "projector", 2)
    pi_up = LocalOperator(sites, np.kron(P, np.diag([1.0, 0.0])), "projector", 2)
    return pi_dn, pi_up


@lru_cache(maxsize=None)
def _motzkin_matrix():
    # digits: 0 = up, 1 = zero, 2 = down; pair code 3*left + right
    vecs = []
    for a, b in (((0, 1), (1, 0)), ((2, 1), (1, 2)), ((0, 2), (1, 1))):
        v = np.zeros(9, dtype=np.complex128)
        v[3 * a[0] + a[1]] = 1 / np.sqrt(2)
        v[3 * b[0] + b[1]] = -1 / np.sqrt(2)
        vecs.append(v)
    return sum(np.outer(v, v.conj()) for v in vecs)


def motzkin_projector(ell, L):
    """Rank-3 projector M_ell = |U><U| + |D><D| + |F><F| on (ell, ell+1)."""
    sites = (ell % L, (ell + 1) % L)
    return LocalOperator(sites, _motzkin_matrix(), "projector", 3)


def feedback_unitary(family, measured_sites, site_rule="default"):
    """Single-site phase correction applied on a defect outcome.

    Site selection: swap families act on the left measured site; fredkin on
    the center of its triple; motzkin on the left site of its pair. The
    rule can be overridden with "left" / "center" / "right".
    """
    measured_sites = tuple(measured_sites)
    if site_rule == "default":
        site_rule = {"swap2": "left", "swap3": "left", "fredkin": "center", "motzkin": "left"}[family]
    pick = {"left": 0, "center": len(measured_sites) // 2, "right": len(measured_sites) - 1}
    site = measured_sites[pick[site_rule]]
    if family == "swap2":
        return LocalOperator((site,), SIGMA_Z, "unitary", 2)
    if family == "fredkin":
        return LocalOperator((site,), V_QUBIT, "unitary", 2)
    if family in ("swap3", "motzkin"):
        return LocalOperator((site,), V_SPIN1, "unitary", 3)
    raise ValueError(f"unknown family {family!r}")


def outcome_error_probability(eta):
    """Probability of a wrong classical flag at noise rate eta.

    Both error channels (missing a defect, falsely flagging one) use
    (1 - exp(-2 eta))/2: zero at eta = 0, 1/2 as eta grows without bound.
    """
    if eta < 0:
        raise ValueError("noise rate must be non-negative")
    return 0.5 * (1.0 - np.exp(-2.0 * eta))


def noisy_outcome_filter(record, eta, rng_draw):
    """Decide whether feedback runs after a measurement.

    A defect outcome (1) is skipped with probability p(eta); a no-defect
    outcome (0) falsely triggers feedback with the same probability.
    """
    p_err = outcome_error_probability(eta)
    if record.outcome == 1:
        return rng_draw >= p_err
    return rng_draw < p_err


def initial_state(family, L, kind="default"):
    """Zero-magnetization product start states (selectable per family)."""
    if kind == "default":
        kind = "zeros" if family == "motzkin" else "neel"
    N = 3 if family in ("swap3", "motzkin") else 2
    if kind == "neel":
        if L % 2:
            raise ValueError("Neel start needs even L for zero magnetization")
        digits = [(0 if i % 2 == 0 else N - 1) for i in range(L)]
    elif kind == "zeros":
        if N != 3:
            raise ValueError("all-zero spin state exists for spin-1 only")
        digits = [1] * L
    elif kind == "polarized":
        digits = [0] * L
    else:
        raise ValueError(f"unknown initial state kind {kind!r}")
    return QuditState.basis(L, N, digits)


@dataclass(frozen=True)
class TargetState:
    kind: str
    vector: QuditState
    params: tuple = ()


def dicke_state(L, k):
    """Equal-weight symmetric superposition of all k-up configurations."""
    if not 0 <= k <= L:
        raise ValueError("need 0 <= k <= L")
    amps = np.zeros(2**L, dtype=np.complex128)
    for ups in combinations(range(L), k):
        idx = 0
        for u in ups:
            idx |= 1 << (L - 1 - u)
        # digit 0 = up: up sites clear bits of the all-down index
        amps[(2**L - 1) ^ idx] = 1.0
    amps /= np.sqrt(comb(L, k))
    return QuditState(L, 2, amps, check=False)


def _balanced_sign_state(L):
    """Sum over zero-magnetization configs of (-1)^(max height)."""
    if L % 2:
        raise ValueError("balanced qubit states need even L")
    amps = np.zeros(2**L, dtype=np.complex128)
    for ups in combinations(range(L), L // 2):
        digits = [1] * L
        for u in ups:
            digits[u] = 0
        _, m, _ = motzkin_height_profile(digits, N=2)
        idx = 0
        for d in digits:
            idx = idx * 2 + d
        amps[idx] = (-1.0) ** m
    amps /= np.sqrt(comb(L, L // 2))
    return QuditState(L, 2, amps, check=False)


def _sz0_sector_spin1(L):
    """Basis of the zero-magnetization spin-1 sector: (digit tuples, index map)."""
    configs = []
    # place j ups and j downs among L sites, rest zeros
    for j in range(L // 2 + 1):
        for ups in combinations(range(L), j):
            rest = [s for s in range(L) if s not in ups]
            for downs in combinations(rest, j):
                digits = [1] * L
                for u in ups:
                    digits[u] = 0
                for d in downs:
                    digits[d] = 2
                configs.append(tuple(digits))
    configs.sort()
    index = {c: i for i, c in enumerate(configs)}
    return configs, index


def motzkin_ground_pbc(L):
    """Numeric kernel of the periodic Motzkin projector sum in the Sz = 0
    sector. Raises if the kernel is not one-dimensional."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.linalg import eigsh

    configs, index = _sz0_sector_spin1(L)
    dim = len(configs)
    M = _motzkin_matrix().real
    rows, cols, vals = [], [], []
    for ci, digits in enumerate(configs):
        for ell in range(L):
            a, b = digits[ell], digits[(ell + 1) % L]
            c = 3 * a + b
            col = M[:, c]
            for cp in np.nonzero(col)[0]:
                nd = list(digits)
                nd[ell], nd[(ell + 1) % L] = divmod(int(cp), 3)
                rows.append(index[tuple(nd)])
                cols.append(ci)
                vals.append(col[cp])
    H = coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    if dim <= 400:
        evals, evecs = np.linalg.eigh(H.toarray())
    else:
        evals, evecs = eigsh(H, k=4, which="SA", maxiter=20000)
        order = np.argsort(evals)
        evals, evecs = evals[order], evecs[:, order]
    n_kernel = int(np.sum(evals < 1e-10))
    if n_kernel != 1:
        raise ValueError(
            f"periodic Motzkin kernel dimension is {n_kernel} (not 1) at L={L}"
        )
    amps = np.zeros(3**L, dtype=np.complex128)
    for ci, digits in enumerate(configs):
        idx = 0
        for d in digits:
            idx = idx * 3 + d
        amps[idx] = evecs[ci, 0]
    return QuditState(L, 3, amps, normalize=True)


def target_state(kind, L, k=None):
    """Construct a named target state.

    kinds: "dicke" (needs k, default L/2), "anomalous" (the sign-weighted
    balanced superposition), "fredkin_stationary" (normalized |A> - |D>),
    "motzkin_ground" (numeric, periodic chain).
    """
    if kind == "dicke":
        k = L // 2 if k is None else k
        return TargetState("dicke", dicke_state(L, k), (L, k))
    if kind == "anomalous":
        return TargetState("anomalous", _balanced_sign_state(L), (L,))
    if kind == "fredkin_stationary":
        A = _balanced_sign_state(L).amps
        D = dicke_state(L, L // 2).amps
        v = A - D
        return TargetState("fredkin_stationary", QuditState(L, 2, v, normalize=True), (L,))
    if kind == "motzkin_ground":
        return TargetState("motzkin_ground", motzkin_ground_pbc(L), (L,))
    raise ValueError(f"unknown target kind {kind!r}")


@dataclass(frozen=True)
class ProtocolSpec:
    """Immutable protocol configuration; operator matrices are cached and
    shared across trajectory workers."""

    family: str
    L: int
    delta: float = None  # None: nearest-neighbor measurement pairs
    kappa: float = 0.0
    eta: float = 0.0
    feedback_site_rule: str = "default"
    fredkin_measurement_mode: str = "kernel"
    initial_kind: str = "default"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.L < 2:
            raise ValueError("need at least two sites")
        if self.delta is not None and self.family not in ("swap2", "swap3"):
            raise ValueError("long-range measurement is defined for the swap families only")
        if self.delta is not None and self.delta < 0:
            raise ValueError("range exponent must be non-negative")
        if self.kappa < 0 or self.eta < 0:
            raise ValueError("rates must be non-negative")
        if self.fredkin_measurement_mode not in ("kernel", "cswap-pair"):
            raise ValueError("fredkin_measurement_mode must be 'kernel' or 'cswap-pair'")

    @property
    def N(self):
        return 3 if self.family in ("swap3", "motzkin") else 2

    @property
    def n_channels(self):
        return self.L

    @property
    def long_range(self):
        return self.delta is not None

    def support_for(self, alpha):
        """Site tuple of measurement channel alpha (nearest-neighbor modes)."""
        L = self.L
        if self.family == "fredkin":
            return ((alpha - 1) % L, alpha % L, (alpha + 1) % L)
        return (alpha % L, (alpha + 1) % L)

    def defect_projector(self, sites=None, alpha=0):
        """Measured (and order-parameter) projector: outcome 1 = defect."""
        sites = self.support_for(alpha) if sites is None else tuple(sites)
        if self.family in ("swap2", "swap3"):
            return swap_projector(self.N, sites)
        if self.family == "fredkin":
            return fredkin_defect_projector(sites[1], self.L)
        return motzkin_projector(sites[0], self.L)

    def feedback(self, sites):
        return feedback_unitary(self.family, sites, self.feedback_site_rule)

    def initial(self):
        return initial_state(self.family, self.L, self.initial_kind)

    def feedback_lambda(self):
        """Feedback strength lambda = 1 - |<s|V|s>|^2 on a measured pair.

        This is the absorption rate entering the classical walk. The qubit
        singlet sector is one-dimensional and the value is exact (default
        sigma^z feedback gives lambda = 1); for spin-1 the antisymmetric
        sector is three-dimensional and the sector-averaged diagonal of
        P V P is reported.
        """
        if self.family not in ("swap2", "swap3"):
            raise ValueError("feedback strength is defined for the swap families")
        sites = (0, 1)
        P = swap_projector(self.N, sites).matrix
        fb = self.feedback(sites)
        V = np.kron(fb.matrix, np.eye(self.N)) if fb.support == (0,) else np.kron(np.eye(self.N), fb.matrix)
        scale = np.trace(P @ V @ P) / np.trace(P)
        return float(1.0 - abs(scale) ** 2)

    def default_target(self):
        if self.family == "swap2":
            return target_state("dicke", self.L)
        if self.family == "fredkin":
            return target_state("fredkin_stationary", self.L)
        if self.family == "motzkin":
            return target_state("motzkin_ground", self.L)
        raise ValueError(f"no default target for family {self.family!r}")

    def with_noise(self, eta):
        return replace(self, eta=eta)


def max_projector_expectation(protocol, state):
    """max over channels of <defect projector>; < 1e-10 on a dark state."""
    from .state import expectation

    return max(
        expectation(state, protocol.defect_projector(alpha=a))
        for a in range(protocol.n_channels)
    )
