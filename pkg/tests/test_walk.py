"""Folded absorbing-walk solver: generator structure against closed forms,
propagation paths, noise floors, and the flow-exponent estimators."""

import numpy as np
import pytest

from ffcontrol import walk
from ffcontrol.walk import (
    build_generator,
    crossover_delta,
    dispersion_asymptotics,
    evolve,
    mu_exponent,
    nearest_neighbor_generator,
    neel_profile,
    smallest_eigenvalue,
    stationary_noisy,
)


class TestGeneratorStructure:
    def test_column_sums_vanish_without_absorber(self):
        g = build_generator(1, 12, 2.0, lam=0.0)
        assert np.abs(g.G.sum(axis=0)).max() < 1e-13

    def test_total_weight_conserved_without_absorber(self):
        g = build_generator(1, 16, 1.5, lam=0.0)
        out = evolve(g, neel_profile(16), np.array([0.0, 3.0, 11.0]))
        np.testing.assert_allclose(out.sum(axis=1), 16**2 / 8.0, rtol=1e-12)

    def test_nn_builder_matches_general(self):
        for L, lam, kappa in ((8, 1.0, 0.0), (14, 0.6, 0.0), (12, 1.0, 2.5)):
            a = nearest_neighbor_generator(L, lam=lam, kappa=kappa)
            b = build_generator(1, L, None, lam=lam, kappa=kappa)
            np.testing.assert_allclose(a.G, b.G, atol=1e-14)

    def test_symmetrized_preserves_spectrum(self):
        g = build_generator(1, 20, 2.3)
        ev_raw = np.sort(np.linalg.eigvals(g.G).real)
        ev_sym = np.sort(np.linalg.eigvalsh(g.symmetrized()))
        np.testing.assert_allclose(ev_raw, ev_sym, atol=1e-10)

    def test_torus_fold_counts_all_sites(self):
        for L in (4, 5, 6, 9):
            g = build_generator(2, L, 0.0)
            assert g.orbit.sum() == L * L - 1

    def test_validation(self):
        with pytest.raises(ValueError):
            build_generator(3, 8, 1.0)
        with pytest.raises(ValueError):
            build_generator(1, 2, 1.0)
        with pytest.raises(ValueError):
            build_generator(1, 8, 1.0, lam=1.5)
        with pytest.raises(ValueError):
            build_generator(1, 8, -0.5)
        with pytest.raises(ValueError):
            build_generator(1, 8, 1.0, eta=-0.1)
        with pytest.raises(ValueError):
            nearest_neighbor_generator(9)


class TestDecayRates:
    def test_nn_closed_form(self):
        # lam = 1 makes r = 0 exactly Dirichlet: tau = 2 (1 - cos(pi/L))
        for L in (8, 16, 32, 64):
            tau = smallest_eigenvalue(nearest_neighbor_generator(L))
            assert tau == pytest.approx(2.0 * (1.0 - np.cos(np.pi / L)), abs=1e-14)

    def test_all_to_all_shifted_identity(self):
        # Delta = 0: uniform rates commute with the absorber, every
        # eigenvalue shifts by 2 lam / (L^d - 1) and the slowest mode is
        # the shift itself
        tau = smallest_eigenvalue(build_generator(1, 51, 0.0, lam=0.7))
        assert tau == pytest.approx(1.4 / 50.0, rel=1e-12)
        tau2 = smallest_eigenvalue(build_generator(2, 8, 0.0))
        assert tau2 == pytest.approx(2.0 / 63.0, rel=1e-12)

    def test_partial_absorber_is_slower(self):
        full = smallest_eigenvalue(nearest_neighbor_generator(32, lam=1.0))
        part = smallest_eigenvalue(nearest_neighbor_generator(32, lam=0.4))
        assert 0 < part < full

    def test_no_absorber_no_decay(self):
        tau = smallest_eigenvalue(build_generator(1, 16, 2.0, lam=0.0))
        assert abs(tau) < 1e-12

    def test_scrambling_speeds_decay(self):
        taus = [
            smallest_eigenvalue(build_generator(1, 32, None, kappa=k))
            for k in (0.0, 1.0, 4.0)
        ]
        assert taus[0] < taus[1] < taus[2]

    def test_noisy_generator_rejected(self):
        g = build_generator(1, 16, 2.0, eta=0.1)
        with pytest.raises(ValueError):
            smallest_eigenvalue(g)


class TestFlowExponents:
    def test_diffusive_regime(self):
        mu = mu_exponent(6.0, 128)
        assert 1.95 < mu < 2.01

    def test_nn_is_diffusive(self):
        mu = mu_exponent(None, 64, nn=True)
        assert 1.99 < mu <= 2.0

    def test_absorption_limited_regime(self):
        # short Delta: the walker is absorbed from every r at rate ~ gamma_r,
        # so the slowest mode tracks the mean absorption ~ 1/L and mu -> 1
        mu = mu_exponent(1.5, 128)
        assert 0.95 < mu < 1.1

    def test_crossover_bracket(self):
        dc = crossover_delta(L=32, factor=2)
        assert 2.0 < dc < 2.8


class TestEvolve:
    def test_tail_rate_matches_eigenvalue(self):
        g = nearest_neighbor_generator(32)
        tau = smallest_eigenvalue(g)
        out = evolve(g, neel_profile(32), np.array([400.0, 800.0]))
        rate = np.log(out[0].sum() / out[1].sum()) / 400.0
        assert rate == pytest.approx(tau, rel=1e-8)

    def test_rk4_path_agrees_with_eigenpath(self, monkeypatch):
        g = build_generator(1, 24, 1.5, eta=0.02)
        P0 = neel_profile(24)
        grid = np.array([0.5, 2.0, 5.0, 12.0])
        ref = evolve(g, P0, grid)
        monkeypatch.setattr(walk, "_DENSE_EIG_LIMIT", 4)
        alt = evolve(g, P0, grid)
        np.testing.assert_allclose(alt, ref, atol=5e-3)

    def test_weights_stay_nonnegative(self):
        g = nearest_neighbor_generator(16)
        out = evolve(g, neel_profile(16), np.geomspace(0.1, 50.0, 20))
        assert out.min() > -1e-10

    def test_input_validation(self):
        g = nearest_neighbor_generator(8)
        with pytest.raises(ValueError):
            evolve(g, np.ones(3), [1.0])
        with pytest.raises(ValueError):
            evolve(g, -neel_profile(8), [1.0])
        with pytest.raises(ValueError):
            evolve(g, neel_profile(8), [2.0, 1.0])


class TestNoiseFloor:
    def test_strong_drive_saturates_half(self):
        g = build_generator(1, 16, 2.0, eta=50.0)
        P = stationary_noisy(g)
        np.testing.assert_allclose(P, 0.5, atol=5e-3)

    def test_profile_rises_away_from_absorber(self):
        P = stationary_noisy(build_generator(1, 32, None, eta=0.01))
        assert np.all(np.diff(P[:10]) > 0)

    def test_evolve_converges_to_stationary(self):
        g = build_generator(1, 16, None, eta=0.1)
        P_inf = stationary_noisy(g)
        out = evolve(g, neel_profile(16), np.array([400.0]))
        np.testing.assert_allclose(out[0], P_inf, atol=1e-8)

    def test_requires_noise(self):
        with pytest.raises(ValueError):
            stationary_noisy(build_generator(1, 16, 2.0))


class TestProfilesAndDispersion:
    def test_alternating_profile_totals(self):
        # L/2 x L/2 antialigned pairs at weight 1/2: total L^2/8, and the
        # r = 1 row counts the L bonds at weight 1/2 each
        for L in (6, 8, 12, 16):
            P = neel_profile(L)
            assert P.sum() == pytest.approx(L * L / 8.0)
            assert P[0] == L / 2.0
        with pytest.raises(ValueError):
            neel_profile(7)

    def test_dispersion_tags(self):
        _, _, slope_q, tag_q = dispersion_asymptotics(3.5)
        assert tag_q == "quadratic"
        assert slope_q == pytest.approx(2.0, abs=0.1)
        _, _, slope_f, tag_f = dispersion_asymptotics(1.8)
        assert tag_f == "fractional"
        assert slope_f == pytest.approx(0.8, abs=0.15)

    def test_dispersion_gate(self):
        with pytest.raises(ValueError):
            dispersion_asymptotics(0.9)

    def test_state_total(self):
        g = nearest_neighbor_generator(8)
        s = g.state(neel_profile(8))
        assert s.total == pytest.approx(8.0)
