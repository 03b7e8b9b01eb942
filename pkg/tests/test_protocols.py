"""Protocol families: measured projectors, feedback, targets, noise filter,
and the three-site operator algebra."""

import numpy as np
import pytest

from ffcontrol.analysis import motzkin_height_profile
from ffcontrol.protocols import (
    FAMILIES,
    ProtocolSpec,
    dicke_state,
    feedback_unitary,
    fredkin_cswap_projectors,
    fredkin_kernel_projector,
    fredkin_operator,
    initial_state,
    motzkin_ground_pbc,
    motzkin_projector,
    noisy_outcome_filter,
    outcome_error_probability,
    scrambling_unitary,
    swap_projector,
    target_state,
)
from ffcontrol.state import MeasurementRecord, expectation, swap_matrix


def apply_op(op, state):
    from ffcontrol._kernels import apply_local

    return apply_local(state.amps, op.matrix, op.support, state.L, state.N)


class TestSwapFamilies:
    def test_singlet_projector_structure(self):
        P = swap_projector(2, (0, 1)).matrix
        assert np.allclose(P @ P, P, atol=1e-14)
        assert np.linalg.matrix_rank(P) == 1
        sing = np.array([0, 1, -1, 0]) / np.sqrt(2)
        np.testing.assert_allclose(P @ sing, sing, atol=1e-14)

    def test_spin1_antisymmetric_rank(self):
        P = swap_projector(3, (0, 1)).matrix
        assert np.linalg.matrix_rank(P) == 3

    def test_supports_wrap(self):
        p = ProtocolSpec("swap2", 6)
        assert p.support_for(5) == (5, 0)
        assert p.n_channels == 6

    def test_feedback_lambda_values(self):
        assert ProtocolSpec("swap2", 4).feedback_lambda() == pytest.approx(1.0)
        assert ProtocolSpec("swap3", 4).feedback_lambda() == pytest.approx(8.0 / 9.0)

    def test_scrambler_is_swap_rotation(self):
        U = scrambling_unitary(2, (0, 1), 0.0).matrix
        np.testing.assert_allclose(U, np.eye(4), atol=1e-14)
        U = scrambling_unitary(2, (0, 1), np.pi / 2).matrix
        np.testing.assert_allclose(U, 1j * swap_matrix(2), atol=1e-14)


class TestFredkin:
    def test_operator_is_psd_not_projector(self):
        F = fredkin_operator(1, 6).matrix
        w = np.linalg.eigvalsh(F)
        assert w.min() > -1e-12
        assert np.abs(F @ F - F).max() > 0.1  # genuinely not idempotent

    def test_kernel_complement_split(self):
        p = ProtocolSpec("fredkin", 6)
        K = fredkin_kernel_projector(1, 6).matrix
        Q = p.defect_projector(alpha=1).matrix
        np.testing.assert_allclose(K + Q, np.eye(8), atol=1e-14)
        F = fredkin_operator(1, 6).matrix
        np.testing.assert_allclose(F @ K, np.zeros((8, 8)), atol=1e-12)

    def test_cswap_factorization(self):
        # F = 2 (Pi_dn + Pi_up) with both factors of the form (1 - CS)/2
        F = fredkin_operator(2, 8).matrix
        pdn, pup = fredkin_cswap_projectors(2, 8)
        np.testing.assert_allclose(F, 2 * (pdn.matrix + pup.matrix), atol=1e-14)
        for pi in (pdn, pup):
            CS = np.eye(8) - 2 * pi.matrix
            np.testing.assert_allclose(CS @ CS.conj().T, np.eye(8), atol=1e-14)
            np.testing.assert_allclose(CS @ CS, np.eye(8), atol=1e-14)  # involution

    def test_cswap_pair_shares_kernel(self):
        pdn, pup = fredkin_cswap_projectors(1, 4)
        both = pdn.matrix + pup.matrix
        F = fredkin_operator(1, 4).matrix
        assert (np.abs(np.linalg.eigvalsh(both)) < 1e-12).sum() == (
            np.abs(np.linalg.eigvalsh(F)) < 1e-12
        ).sum()

    def test_supports_are_triples(self):
        p = ProtocolSpec("fredkin", 6)
        assert p.support_for(0) == (5, 0, 1)
        assert p.support_for(3) == (2, 3, 4)

    @pytest.mark.parametrize("L", [4, 6])
    def test_annihilates_targets(self, L):
        for kind in ("dicke", "anomalous"):
            tgt = target_state(kind, L).vector
            for ell in range(L):
                out = apply_op(fredkin_operator(ell, L), tgt)
                assert np.abs(out).max() < 1e-12, (kind, ell)


class TestMotzkin:
    def test_projector_rank_three(self):
        M = motzkin_projector(0, 6).matrix
        assert np.allclose(M @ M, M, atol=1e-14)
        assert np.linalg.matrix_rank(M) == 3

    def test_ground_state_is_dark(self):
        for L in (4, 6):
            g = motzkin_ground_pbc(L)
            p = ProtocolSpec("motzkin", L)
            for a in range(L):
                assert expectation(g, p.defect_projector(alpha=a)) < 1e-10

    def test_ground_state_weights_follow_height_words(self):
        g = motzkin_ground_pbc(6)
        # all matched height words carry weight, e.g. the flat word
        flat = int("".join("1" * 6), 3)
        assert abs(g.amps[flat]) > 1e-8

    def test_height_profile_worked_example(self):
        h, m, matched = motzkin_height_profile([0, 1, 0, 0, 1, 1])
        assert list(h) == [1, 0, 1, 2, 1, 0]
        assert m == 2 and matched


class TestInitialStates:
    def test_neel_is_default_for_qubits(self):
        s = initial_state("swap2", 4)
        assert s.amps[int("0101", 2)] == 1.0

    def test_neel_rejects_odd(self):
        with pytest.raises(ValueError):
            initial_state("swap2", 5, "neel")

    def test_motzkin_default_all_zero_spin(self):
        s = initial_state("motzkin", 4)
        idx = sum(1 * 3**k for k in range(4))
        assert s.amps[idx] == 1.0

    def test_zeros_needs_spin1(self):
        with pytest.raises(ValueError):
            initial_state("swap2", 4, "zeros")


class TestTargets:
    @pytest.mark.parametrize("L,k", [(4, 2), (6, 3), (8, 4), (7, 3)])
    def test_dicke_is_uniform_over_weight_sector(self, L, k):
        v = dicke_state(L, k).amps
        nz = np.nonzero(np.abs(v) > 1e-15)[0]
        from math import comb

        assert len(nz) == comb(L, k)
        assert np.allclose(np.abs(v[nz]), 1 / np.sqrt(comb(L, k)), atol=1e-12)

    def test_dicke_swap_symmetric(self):
        v = dicke_state(4, 2)
        p = ProtocolSpec("swap2", 4)
        for a in range(4):
            assert expectation(v, p.defect_projector(alpha=a)) < 1e-12

    def test_anomalous_sign_structure(self):
        # balanced configurations weighted by (-1)^(number of inversions)
        v = target_state("anomalous", 4).vector.amps
        nz = np.nonzero(np.abs(v) > 1e-15)[0]
        assert len(nz) == 6
        assert abs(np.sum(np.abs(v) ** 2) - 1) < 1e-12

    def test_default_targets(self):
        assert ProtocolSpec("swap2", 6).default_target().kind == "dicke"
        assert ProtocolSpec("fredkin", 6).default_target().kind == "fredkin_stationary"
        with pytest.raises(ValueError):
            ProtocolSpec("swap3", 4).default_target()


class TestNoiseFilter:
    def test_error_probability_limits(self):
        assert outcome_error_probability(0.0) == 0.0
        assert outcome_error_probability(50.0) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            outcome_error_probability(-1.0)

    def test_monotone_in_eta(self):
        etas = np.linspace(0, 3, 20)
        ps = [outcome_error_probability(e) for e in etas]
        assert np.all(np.diff(ps) > 0)

    def test_filter_noiseless_is_faithful(self):
        hit = MeasurementRecord((0, 1), 1, 0.5)
        miss = MeasurementRecord((0, 1), 0, 0.5)
        for draw in (0.0, 0.5, 0.999):
            assert noisy_outcome_filter(hit, 0.0, draw)
            assert not noisy_outcome_filter(miss, 0.0, draw)

    def test_filter_flips_with_probability_p(self):
        eta = 0.4
        p = outcome_error_probability(eta)
        hit = MeasurementRecord((0, 1), 1, 0.5)
        # draw below p: the defect flag is lost
        assert not noisy_outcome_filter(hit, eta, p - 1e-9)
        assert noisy_outcome_filter(hit, eta, p + 1e-9)
        miss = MeasurementRecord((0, 1), 0, 0.5)
        assert noisy_outcome_filter(miss, eta, p - 1e-9)
        assert not noisy_outcome_filter(miss, eta, p + 1e-9)


class TestProtocolSpecValidation:
    def test_family_gate(self):
        with pytest.raises(ValueError):
            ProtocolSpec("xxx", 4)
        for fam in FAMILIES:
            ProtocolSpec(fam, 4)

    def test_long_range_swap_only(self):
        ProtocolSpec("swap2", 8, delta=2.0)
        with pytest.raises(ValueError):
            ProtocolSpec("fredkin", 8, delta=2.0)
        with pytest.raises(ValueError):
            ProtocolSpec("swap2", 8, delta=-1.0)

    def test_rates_nonnegative(self):
        with pytest.raises(ValueError):
            ProtocolSpec("swap2", 4, kappa=-0.1)
        with pytest.raises(ValueError):
            ProtocolSpec("swap2", 4, eta=-0.1)

    def test_measurement_mode_gate(self):
        ProtocolSpec("fredkin", 6, fredkin_measurement_mode="cswap-pair")
        with pytest.raises(ValueError):
            ProtocolSpec("fredkin", 6, fredkin_measurement_mode="both")

    def test_with_noise_returns_new_spec(self):
        p = ProtocolSpec("swap2", 4)
        q = p.with_noise(0.2)
        assert q.eta == 0.2 and p.eta == 0.0 and q.family == "swap2"


class TestFeedbackUnitaries:
    def test_site_selection_rules(self):
        assert feedback_unitary("swap2", (3, 4)).support == (3,)
        assert feedback_unitary("fredkin", (2, 3, 4)).support == (3,)
        assert feedback_unitary("motzkin", (5, 0)).support == (5,)
        assert feedback_unitary("swap2", (3, 4), "right").support == (4,)

    def test_all_are_unitary_phase_gates(self):
        for fam, sites in (("swap2", (0, 1)), ("swap3", (0, 1)),
                           ("fredkin", (0, 1, 2)), ("motzkin", (0, 1))):
            V = feedback_unitary(fam, sites).matrix
            np.testing.assert_allclose(V @ V.conj().T, np.eye(V.shape[0]), atol=1e-14)
            assert np.allclose(V, np.diag(np.diagonal(V)))
