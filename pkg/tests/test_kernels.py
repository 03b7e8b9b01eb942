"""Kernel backends: dense-embedding oracle, backend cross-agreement, and
basic algebraic invariants of apply/expect on random states."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffcontrol._kernels import _pyops

try:
    from ffcontrol._kernels import _core
except ImportError:
    _core = None

BACKENDS = [_pyops] + ([_core] if _core is not None else [])


def random_state(L, N, rng):
    v = rng.normal(size=N**L) + 1j * rng.normal(size=N**L)
    v /= np.linalg.norm(v)
    return np.ascontiguousarray(v)


def random_op(k, N, rng, kind="general"):
    M = N**k
    A = rng.normal(size=(M, M)) + 1j * rng.normal(size=(M, M))
    if kind == "unitary":
        return np.ascontiguousarray(np.linalg.qr(A)[0])
    if kind == "projector":
        Q = np.linalg.qr(A)[0][:, : M // 2]
        return np.ascontiguousarray(Q @ Q.conj().T)
    return np.ascontiguousarray(A)


def embed_dense(op, sites, L, N):
    """Brute-force embedding via index arithmetic, the test oracle."""
    dim = N**L
    full = np.zeros((dim, dim), dtype=complex)
    k = len(sites)
    strides = [N ** (L - 1 - s) for s in sites]
    rest = [s for s in range(L) if s not in sites]
    rest_strides = [N ** (L - 1 - s) for s in rest]

    def assemble(digits_rest):
        base = sum(d * st_ for d, st_ in zip(digits_rest, rest_strides))
        idx = []
        for loc in range(N**k):
            digs = [(loc // N ** (k - 1 - j)) % N for j in range(k)]
            idx.append(base + sum(d * s for d, s in zip(digs, strides)))
        idx = np.array(idx)
        full[np.ix_(idx, idx)] += op

    if rest:
        for flat in range(N ** len(rest)):
            digits = [(flat // N ** (len(rest) - 1 - j)) % N for j in range(len(rest))]
            assemble(digits)
    else:
        assemble([])
    return full


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.BACKEND)
@pytest.mark.parametrize(
    "L,N,sites",
    [
        (4, 2, (1, 2)),
        (4, 2, (3, 0)),  # wrap-around pair, unsorted order
        (5, 2, (2, 3, 4)),
        (5, 2, (4, 0, 1)),
        (3, 3, (0, 2)),
        (4, 3, (1, 2, 3)),
    ],
)
def test_apply_matches_dense_embedding(backend, L, N, sites):
    rng = np.random.default_rng(hash((L, N, sites)) % 2**32)
    psi = random_state(L, N, rng)
    op = random_op(len(sites), N, rng)
    got = backend.apply_local(psi, op, sites, L, N)
    want = embed_dense(op, sites, L, N) @ psi
    np.testing.assert_allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.BACKEND)
def test_expect_matches_dense_embedding(backend):
    rng = np.random.default_rng(7)
    L, N, sites = 5, 2, (1, 3)
    psi = random_state(L, N, rng)
    op = random_op(2, N, rng)
    got = backend.expect_local(psi, op, sites, L, N)
    want = np.vdot(psi, embed_dense(op, sites, L, N) @ psi)
    assert abs(got - want) < 1e-12


@pytest.mark.skipif(_core is None, reason="compiled extension not built")
@pytest.mark.parametrize(
    "L,N,k", [(6, 2, 1), (6, 2, 2), (6, 2, 3), (4, 3, 2), (5, 3, 3)]
)
def test_backends_agree(L, N, k):
    rng = np.random.default_rng(k + 10 * N + 100 * L)
    psi = random_state(L, N, rng)
    sites = tuple(rng.choice(L, size=k, replace=False).tolist())
    op = random_op(k, N, rng)
    a = _pyops.apply_local(psi, op, sites, L, N)
    b = _core.apply_local(psi, op, sites, L, N)
    np.testing.assert_allclose(a, b, atol=1e-13)

    out_a, out_b = np.empty_like(psi), np.empty_like(psi)
    na = _pyops.apply_local_norm2(psi, op, sites, L, N, out_a)
    nb = _core.apply_local_norm2(psi, op, sites, L, N, out_b)
    assert na == pytest.approx(nb, abs=1e-13)
    np.testing.assert_allclose(out_a, out_b, atol=1e-13)

    ea = _pyops.expect_local(psi, op, sites, L, N)
    eb = _core.expect_local(psi, op, sites, L, N)
    assert abs(ea - eb) < 1e-13


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.BACKEND)
def test_identity_is_noop_and_out_buffer_is_filled(backend):
    rng = np.random.default_rng(3)
    L, N = 5, 2
    psi = random_state(L, N, rng)
    eye = np.eye(4, dtype=complex)
    out = np.full(N**L, 99.0 + 0j)  # dirty buffer must be fully overwritten
    res = backend.apply_local(psi, eye, (1, 4), L, N, out)
    assert res is out
    np.testing.assert_allclose(out, psi, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    sites=st.permutations(range(4)).map(lambda p: tuple(p[:2])),
)
def test_unitary_preserves_norm_and_expect_is_consistent(seed, sites):
    rng = np.random.default_rng(seed)
    L, N = 4, 2
    psi = random_state(L, N, rng)
    U = random_op(2, N, rng, kind="unitary")
    for backend in BACKENDS:
        phi = backend.apply_local(psi, U, sites, L, N)
        assert np.linalg.norm(phi) == pytest.approx(1.0, abs=1e-12)
        # <psi|U|psi> through expect_local equals the direct overlap
        ov = backend.expect_local(psi, U, sites, L, N)
        assert abs(ov - np.vdot(psi, phi)) < 1e-12


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.BACKEND)
def test_norm2_equals_projected_weight(backend):
    rng = np.random.default_rng(11)
    L, N = 5, 2
    psi = random_state(L, N, rng)
    P = random_op(2, N, rng, kind="projector")
    out = np.empty_like(psi)
    n2 = backend.apply_local_norm2(psi, P, (0, 3), L, N, out)
    assert n2 == pytest.approx(np.linalg.norm(out) ** 2, abs=1e-13)
    # projector: squared norm equals the expectation value
    ev = backend.expect_local(psi, P, (0, 3), L, N).real
    assert n2 == pytest.approx(ev, abs=1e-12)
