"""Dense qudit state vectors with local operator application and measurement.

Basis convention: a length-L chain with local dimension N is stored as a
flat complex vector of length N**L. Site 0 is the most significant base-N
digit of the basis index. Digit meanings:

    N = 2:  0 = up, 1 = down
    N = 3:  0 = up (Sz=+1), 1 = zero (Sz=0), 2 = down (Sz=-1)

Operations mutate the state in place and return it; a state belongs to one
trajectory worker at a time. Periodic site arithmetic is modulo L.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import apply_local, apply_local_norm2, expect_local

NORM_TOL = 1e-12
NULL_COLLAPSE_TOL = 1e-14


class QuditState:
    """Normalized pure state of L qudits (N in {2, 3})."""

    __slots__ = ("L", "N", "amps")

    def __init__(self, L, N, amps, normalize=False, check=True):
        if L < 2:
            raise ValueError("need at least two sites")
        if N not in (2, 3):
            raise ValueError("local dimension must be 2 or 3")
        amps = np.asarray(amps, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != N**L:
            raise ValueError(f"amplitude vector must have length {N}**{L}")
        if normalize:
            nrm = np.linalg.norm(amps)
            if nrm < NULL_COLLAPSE_TOL:
                raise ValueError("cannot normalize a null vector")
            amps = amps / nrm
        elif check and abs(np.linalg.norm(amps) - 1.0) > NORM_TOL:
            raise ValueError("state vector is not normalized")
        self.L = int(L)
        self.N = int(N)
        self.amps = np.ascontiguousarray(amps)

    @classmethod
    def basis(cls, L, N, digits):
        """Product basis state from a digit string/sequence, site 0 first."""
        digits = [int(d) for d in digits]
        if len(digits) != L or any(d < 0 or d >= N for d in digits):
            raise ValueError("invalid digit configuration")
        idx = 0
        for d in digits:
            idx = idx * N + d
        amps = np.zeros(N**L, dtype=np.complex128)
        amps[idx] = 1.0
        return cls(L, N, amps, check=False)

    @property
    def dim(self):
        return self.N**self.L

    def norm(self):
        return float(np.linalg.norm(self.amps))

    def copy(self):
        return QuditState(self.L, self.N, self.amps.copy(), check=False)

    def renormalize(self):
        nrm = np.linalg.norm(self.amps)
        if nrm < NULL_COLLAPSE_TOL:
            raise ValueError("null vector")
        self.amps /= nrm
        return self

    def overlap(self, other):
        return complex(np.vdot(other.amps, self.amps))

    def __repr__(self):
        return f"QuditState(L={self.L}, N={self.N})"


@dataclass(frozen=True)
class LocalOperator:
    """Dense operator on 1-3 distinct sites.

    ``matrix`` is (N**k, N**k) with support[0] the most significant local
    digit. ``kind`` is one of "unitary", "projector", "hermitian-psd".
    """

    support: tuple
    matrix: np.ndarray
    kind: str
    N: int = 2

    def __post_init__(self):
        sup = tuple(int(s) for s in self.support)
        if not 1 <= len(sup) <= 3:
            raise ValueError("support must cover 1 to 3 sites")
        if len(set(sup)) != len(sup):
            raise ValueError("duplicate sites in support")
        mat = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        M = self.N ** len(sup)
        if mat.shape != (M, M):
            raise ValueError(f"matrix must be {M}x{M}")
        if self.kind == "unitary":
            if np.linalg.norm(mat.conj().T @ mat - np.eye(M)) > 1e-12 * M:
                raise ValueError("matrix is not unitary")
        elif self.kind == "projector":
            if np.linalg.norm(mat @ mat - mat) > 1e-12 * M:
                raise ValueError("matrix is not idempotent")
            if np.linalg.norm(mat - mat.conj().T) > 1e-12 * M:
                raise ValueError("matrix is not hermitian")
        elif self.kind != "hermitian-psd":
            raise ValueError(f"unknown operator kind {self.kind!r}")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "matrix", mat)

    @property
    def k(self):
        return len(self.support)

    def is_hermitian(self, tol=1e-12):
        return bool(np.linalg.norm(self.matrix - self.matrix.conj().T) <= tol * self.matrix.shape[0])

    def relabel(self, sites):
        """Same matrix acting on a different site tuple."""
        return LocalOperator(tuple(sites), self.matrix, self.kind, self.N)


@dataclass
class MeasurementRecord:
    """Audit record of one projective measurement."""

    site_set: tuple
    outcome: int
    born_probability: float
    time: float = 0.0
    feedback_applied: bool = field(default=False)


def _check_support(state, op):
    if op.N != state.N:
        raise ValueError("operator local dimension does not match state")
    for s in op.support:
        if not 0 <= s < state.L:
            raise ValueError("support site out of range")


def apply_local_unitary(state, op):
    """Apply a 1-3 site unitary in place; returns the state."""
    if op.kind != "unitary":
        raise ValueError("operator is not flagged unitary")
    _check_support(state, op)
    state.amps = apply_local(state.amps, op.matrix, op.support, state.L, state.N)
    return state


def expectation(state, op):
    """Real expectation value of a hermitian local operator."""
    _check_support(state, op)
    if not op.is_hermitian(1e-10):
        raise ValueError("operator is not hermitian")
    val = expect_local(state.amps, op.matrix, op.support, state.L, state.N)
    if abs(val.imag) > 1e-10:
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def projective_measure(state, proj, rng_draw, time=0.0, scratch=None):
    """Born-rule measurement of a projector; collapses in place.

    Outcome 1 occurs with probability p = <proj> (collapse by proj), else
    outcome 0 (collapse by 1 - proj). Renormalization divides by the exact
    post-collapse norm, which is stabler than sqrt(p) for p near 0 or 1.
    """
    if proj.kind != "projector":
        raise ValueError("measurement requires a projector")
    _check_support(state, proj)
    if scratch is None:
        scratch = np.empty_like(state.amps)
    p = apply_local_norm2(state.amps, proj.matrix, proj.support, state.L, state.N, scratch)
    if p < -1e-12 or p > 1 + 1e-12:
        raise ValueError(f"Born probability {p} outside [0, 1]")
    outcome = 1 if rng_draw < p else 0
    if outcome == 1:
        nrm = np.sqrt(p)
        if nrm < NULL_COLLAPSE_TOL:
            raise ValueError("collapse onto numerically null vector")
        np.divide(scratch, nrm, out=state.amps)
        born = p
    else:
        np.subtract(state.amps, scratch, out=state.amps)
        nrm = np.linalg.norm(state.amps)
        if nrm < NULL_COLLAPSE_TOL:
            raise ValueError("collapse onto numerically null vector")
        state.amps /= nrm
        born = 1.0 - p
    rec = MeasurementRecord(proj.support, outcome, float(born), float(time))
    return state, rec


def schmidt_entropy(state, cut):
    """Von Neumann entropy (nats) of sites [0, cut) via SVD."""
    if not 1 <= cut <= state.L - 1:
        raise ValueError("cut out of range")
    mat = state.amps.reshape(state.N**cut, state.N ** (state.L - cut))
    s = np.linalg.svd(mat, compute_uv=False)
    p = s * s
    p = p[p > 1e-14]
    return float(-np.sum(p * np.log(p)))


def sz_diagonal(L, N):
    """Diagonal of the total-Sz operator over the full basis.

    Qubits use spin-1/2 (each site contributes +-1/2); spin-1 sites
    contribute +1, 0, -1.
    """
    if N == 2:
        site_vals = np.array([0.5, -0.5])
    else:
        site_vals = np.array([1.0, 0.0, -1.0])
    diag = np.zeros(N**L)
    for s in range(L):
        block = N ** (L - 1 - s)
        pattern = np.repeat(site_vals, block)
        reps = N**L // (N * block)
        diag += np.tile(pattern, reps)
    return diag


def swap_matrix(N):
    """The exchange operator on two qudits: S |a b> = |b a>."""
    S = np.zeros((N * N, N * N), dtype=np.complex128)
    for a in range(N):
        for b in range(N):
            S[b * N + a, a * N + b] = 1.0
    return S


def singlet_weight_sum(state, pairs=None):
    """Sum of <P_{l,m}> over unordered site pairs (all pairs by default)."""
    P = 0.5 * (np.eye(state.N**2) - swap_matrix(state.N))
    if pairs is None:
        pairs = [(l, m) for l in range(state.L) for m in range(l + 1, state.L)]
    tot = 0.0
    for l, m in pairs:
        val = expect_local(state.amps, P, (l, m), state.L, state.N)
        tot += val.real
    return tot


def conserved_charges(state, include_j2=None):
    """(Sz, J2) for qubits; (Sz, None) for spin-1 unless J2 is forced.

    J2 = L(L+2)/4 - sum over ordered pairs l != m of <P_{l,m}>.
    """
    if include_j2 is None:
        include_j2 = state.N == 2
    if include_j2 and state.N != 2:
        raise ValueError("J2 is defined for qubits only")
    diag = sz_diagonal(state.L, state.N)
    prob = np.abs(state.amps) ** 2
    sz = float(np.dot(diag, prob))
    if not include_j2:
        return sz, None
    L = state.L
    j2 = 0.25 * L * (L + 2) - 2.0 * singlet_weight_sum(state)
    return sz, j2


def write_state_dump(state, path):
    """Plain-text test-vector dump: one line `basis_index real imag`."""
    with open(path, "w") as fh:
        fh.write(f"# L={state.L} N={state.N}\n")
        for idx, a in enumerate(state.amps):
            fh.write(f"{idx} {a.real:.17e} {a.imag:.17e}\n")


def read_state_dump(path):
    L = N = None
    amps = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = dict(tok.split("=") for tok in line[1:].split())
                L, N = int(parts["L"]), int(parts["N"])
                amps = np.zeros(N**L, dtype=np.complex128)
                continue
            idx, re_, im_ = line.split()
            amps[int(idx)] = float(re_) + 1j * float(im_)
    if amps is None:
        raise ValueError("missing header line")
    return QuditState(L, N, amps)
