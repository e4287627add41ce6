"""Tests for the per-k dense operator algebra."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shearspec.errors import ContractionFailureError, DomainError
from shearspec.grids import FrequencyGrid
from shearspec.operators import (
    G_apply,
    G_matrix,
    OperatorMatrix,
    PhiPair,
    ProfileSpectrum,
    apply_T2,
    apply_delta_t_inv,
    build_T2_tilde,
    build_delta_t,
    delta_t_inv_matrix,
    dt_delta_L,
    dt_delta_t_inv_matrix,
    dt_delta_t_matrix,
    dtG_matrix,
    phi_b_inverse,
    phi_b_step,
    phi_pair_initial,
    t2_tilde_norm,
)

GRID = FrequencyGrid(k_max=2, eta_max=4.0, n_eta=32)
COUETTE = ProfileSpectrum.couette(GRID.delta_eta)
SHEAR = ProfileSpectrum.harmonic(0.05, 2, GRID.delta_eta)


def _rand(n, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


class TestProfile:
    def test_couette_is_zero(self):
        assert COUETTE.is_couette
        assert np.all(COUETTE.conv_matrix("g2m1", GRID) == 0)

    def test_real_valued_coefficients(self):
        for name in ("g2m1", "b"):
            c = SHEAR.coeffs[name]
            assert np.allclose(c, np.conj(c[::-1]))

    def test_non_real_rejected(self):
        c = np.zeros(3, dtype=complex)
        c[2] = 1.0  # no conjugate partner
        with pytest.raises(DomainError):
            ProfileSpectrum(delta_eta=0.25, coeffs={
                "g2m1": c, "b": np.zeros(3, complex),
                "gm1": np.zeros(3, complex)})

    def test_g_squared_consistency(self):
        # (1 + (g-1))^2 == 1 + (g^2-1) away from the truncation boundary
        Mg = SHEAR.g_matrix(GRID)
        lhs = Mg @ Mg
        rhs = np.eye(GRID.n_eta) + SHEAR.conv_matrix("g2m1", GRID)
        interior = slice(8, -8)
        assert np.max(np.abs((lhs - rhs)[interior, interior])) < 1e-10

    def test_eps_measured_scales(self):
        small = ProfileSpectrum.harmonic(0.01, 2, GRID.delta_eta)
        assert 0 < small.eps_measured < SHEAR.eps_measured
        assert np.isclose(SHEAR.eps_measured / small.eps_measured, 5.0,
                          rtol=0.2)


class TestDeltaT:
    def test_couette_diagonal(self):
        m = build_delta_t(1.5, 1, COUETTE, GRID).entries
        u = GRID.eta - 1.5
        assert np.allclose(m, np.diag(-(1.0 + u * u)), atol=0)

    def test_zero_k_rejected(self):
        with pytest.raises(DomainError):
            build_delta_t(0.0, 0, COUETTE, GRID)

    def test_bandedness(self):
        m = build_delta_t(2.0, 1, SHEAR, GRID).entries
        n = GRID.n_eta
        i = np.arange(n)
        far = np.abs(i[:, None] - i[None, :]) > 2
        assert np.max(np.abs(m[far])) == 0.0

    def test_real_field_action(self):
        # conjugate-symmetric input stays conjugate-symmetric across +-k
        f = _rand(GRID.n_eta, 3)
        f_neg = np.conj(f[::-1])
        out_p = build_delta_t(0.7, 1, SHEAR, GRID).entries @ f
        out_m = build_delta_t(0.7, -1, SHEAR, GRID).entries @ f_neg
        assert np.max(np.abs(out_m - np.conj(out_p[::-1]))) < 1e-12

    def test_factorization(self):
        # Delta_t == (I - T2t) Delta_L to rounding
        for t in (0.0, 1.0, 7.5):
            dt_m = build_delta_t(t, 2, SHEAR, GRID).entries
            T = build_T2_tilde(t, 2, SHEAR, GRID).entries
            u = GRID.eta - 2 * t
            dl = np.diag(-(4.0 + u * u)).astype(complex)
            assert np.max(np.abs(dt_m - (np.eye(GRID.n_eta) - T) @ dl)) \
                < 1e-12 * np.abs(dt_m).max()

    def test_negative_definite_symmetric_part(self):
        for t in (0.0, 2.0, 10.0):
            m = build_delta_t(t, 1, SHEAR, GRID).entries
            sym = 0.5 * (m + m.conj().T)
            assert np.linalg.eigvalsh(sym).max() < 0.0


class TestT2:
    def test_zero_profile_identity(self):
        f = _rand(GRID.n_eta, 0)
        out = apply_T2(0.5, 1, COUETTE, GRID, f)
        assert np.allclose(out, f, atol=0)

    def test_norm_small(self):
        nrm = t2_tilde_norm(1.0, 1, SHEAR, GRID)
        assert 0 < nrm < 0.5

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 10 ** 6), t=st.floats(0, 20))
    def test_neumann_matches_direct(self, seed, t):
        f = _rand(GRID.n_eta, seed)
        a = apply_T2(t, 1, SHEAR, GRID, f, method="neumann", tol=1e-11)
        b = apply_T2(t, 1, SHEAR, GRID, f, method="direct")
        assert np.linalg.norm(a - b) < 1e-10 * np.linalg.norm(f)

    def test_geometric_tail(self):
        T = build_T2_tilde(0.0, 1, SHEAR, GRID).entries
        nrm = np.linalg.norm(T, 2)
        f = _rand(GRID.n_eta, 1)
        prev = f
        for _ in range(5):
            cur = T @ prev
            assert np.linalg.norm(cur) <= (nrm + 1e-12) * np.linalg.norm(prev)
            prev = cur

    def test_contraction_failure_raised(self):
        c = np.zeros(3, dtype=complex)
        c[0] = c[2] = 1.5  # |g^2-1| amplitude 3
        big = ProfileSpectrum(delta_eta=GRID.delta_eta, coeffs={
            "g2m1": c, "b": np.zeros(3, complex),
            "gm1": np.zeros(3, complex)})
        with pytest.raises(ContractionFailureError):
            apply_T2(10.0, 1, big, GRID, np.ones(GRID.n_eta))


class TestDeltaTInv:
    def test_couette_pointwise(self):
        f = _rand(GRID.n_eta, 2)
        u = GRID.eta - 3.0
        out = apply_delta_t_inv(3.0, 1, COUETTE, GRID, f)
        assert np.allclose(out, f / (-(1.0 + u * u)), atol=0)

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 10 ** 6), t=st.floats(0, 30))
    def test_residual(self, seed, t):
        f = _rand(GRID.n_eta, seed)
        out = apply_delta_t_inv(t, 1, SHEAR, GRID, f)
        back = build_delta_t(t, 1, SHEAR, GRID).entries @ out
        assert np.linalg.norm(back - f) <= 1e-8 * np.linalg.norm(f)

    def test_inverse_matrix_agrees(self):
        f = _rand(GRID.n_eta, 5)
        m = delta_t_inv_matrix(4.0, 2, SHEAR, GRID)
        assert np.allclose(m @ f, apply_delta_t_inv(4.0, 2, SHEAR, GRID, f),
                           rtol=1e-12)


class TestDtOperators:
    def test_dt_delta_L_example(self):
        # k=1, eta=0, t=1 -> 2k(eta - kt) = -2
        g = FrequencyGrid(2, 8.25, 33)
        vals = dt_delta_L(1.0, 1, g)
        j = int(np.argmin(np.abs(g.eta)))
        assert vals[j] == -2.0

    def test_zero_at_critical_time(self):
        g = FrequencyGrid(2, 8.25, 33)
        vals = dt_delta_L(3.0, 1, g)
        j = int(np.argmin(np.abs(g.eta - 3.0)))
        assert vals[j] == 0.0

    def test_matches_symbol_fd(self):
        h = 1e-6
        t = 2.0
        dp = (build_delta_t(t + h, 1, COUETTE, GRID).entries
              - build_delta_t(t - h, 1, COUETTE, GRID).entries) / (2 * h)
        assert np.max(np.abs(np.diag(dp) - dt_delta_L(t, 1, GRID))) < 1e-8

    def test_dt_delta_t_fd(self):
        h = 1e-6
        t = 1.5
        fd = (build_delta_t(t + h, 1, SHEAR, GRID).entries
              - build_delta_t(t - h, 1, SHEAR, GRID).entries) / (2 * h)
        assert np.max(np.abs(fd - dt_delta_t_matrix(t, 1, SHEAR, GRID))) \
            < 1e-8

    def test_dt_delta_t_inv_fd(self):
        t = 1.5
        exact = dt_delta_t_inv_matrix(t, 1, SHEAR, GRID)
        errs = []
        for h in (1e-3, 5e-4):
            fd = (delta_t_inv_matrix(t + h, 1, SHEAR, GRID)
                  - delta_t_inv_matrix(t - h, 1, SHEAR, GRID)) / (2 * h)
            errs.append(np.max(np.abs(fd - exact)))
        assert errs[0] < 1e-5
        assert errs[1] < 0.3 * errs[0]  # ~ O(h^2)


class TestPhiB:
    def test_zero_b_stays_identity(self):
        pair = phi_pair_initial(GRID)
        out = phi_b_step(pair, 10.0, 1, COUETTE, GRID, tol=1e-10)
        assert np.max(np.abs(out.phi_b - np.eye(GRID.n_eta))) < 1e-9

    def test_couette_phi_tilde_closed_form(self):
        # b=0: phi_tilde = -int_0^t dX Delta_L^{-1} = diag(ik int ds/p)
        t = 5.0
        out = phi_b_step(phi_pair_initial(GRID), t, 1, COUETTE, GRID,
                         tol=1e-11)
        eta = GRID.eta
        integral = np.arctan(eta) - np.arctan(eta - t)
        expected = np.diag(1j * integral)
        assert np.max(np.abs(out.phi_tilde - expected)) < 1e-8

    def test_inverse_identity(self):
        t = 50.0
        out = phi_b_step(phi_pair_initial(GRID), t, 1, SHEAR, GRID,
                         tol=1e-10)
        prod = out.phi_b @ phi_b_inverse(out, SHEAR, GRID)
        assert np.max(np.abs(prod - np.eye(GRID.n_eta))) < 1e-8

    def test_bounded_uniformly(self):
        norms = []
        pair = phi_pair_initial(GRID)
        for t in (5.0, 50.0, 200.0):
            pair = phi_b_step(pair, t, 1, SHEAR, GRID, tol=1e-9)
            norms.append(np.linalg.norm(pair.phi_b, 2))
        assert max(norms) < 10.0


class TestG:
    def test_zero_field(self):
        pair = phi_b_step(phi_pair_initial(GRID), 2.0, 1, SHEAR, GRID)
        out = G_apply(2.0, 1, SHEAR, GRID, pair.phi_tilde,
                      np.zeros(GRID.n_eta))
        assert np.all(out == 0)

    def test_couette_closed_form(self):
        t = 4.0
        pair = phi_b_step(phi_pair_initial(GRID), t, 1, COUETTE, GRID,
                          tol=1e-11)
        f = _rand(GRID.n_eta, 7)
        out = G_apply(t, 1, COUETTE, GRID, pair.phi_tilde, f)
        u = GRID.eta - t
        p = 1.0 + u * u
        expected = (1j * u) * (f / (-p)) + pair.phi_tilde @ f
        assert np.max(np.abs(out - expected)) < 1e-12 * np.abs(f).max()

    def test_bounded_action(self):
        f = _rand(GRID.n_eta, 8)
        worst = 0.0
        pair = phi_pair_initial(GRID)
        for t in (1.0, 10.0, 100.0):
            pair = phi_b_step(pair, t, 1, SHEAR, GRID, tol=1e-9)
            out = G_apply(t, 1, SHEAR, GRID, pair.phi_tilde, f)
            worst = max(worst, np.linalg.norm(out) / np.linalg.norm(f))
        assert worst < 10.0

    def test_dtG_matches_fd(self):
        t = 3.0
        pair = phi_b_step(phi_pair_initial(GRID), t, 1, SHEAR, GRID,
                          tol=1e-11)
        exact = dtG_matrix(t, 1, SHEAR, GRID, pair)
        errs = []
        for h in (2e-3, 1e-3):
            up = phi_b_step(pair, t + h, 1, SHEAR, GRID, tol=1e-11)
            dn = phi_b_step(pair, t - h, 1, SHEAR, GRID, tol=1e-11)
            fd = (G_matrix(t + h, 1, SHEAR, GRID, up.phi_tilde)
                  - G_matrix(t - h, 1, SHEAR, GRID, dn.phi_tilde)) / (2 * h)
            errs.append(np.max(np.abs(fd - exact)))
        order = np.log2(errs[0] / errs[1])
        assert order > 1.9

    def test_dtG_refuses_large_grid(self):
        big = FrequencyGrid(1, 40.0, 320)
        prof = ProfileSpectrum.couette(big.delta_eta)
        pair = phi_pair_initial(big)
        with pytest.raises(DomainError):
            dtG_matrix(0.0, 1, prof, big, pair)

    def test_dtG_decay_slope(self):
        ts = np.geomspace(10.0, 100.0, 8)
        f = _rand(GRID.n_eta, 9)
        vals = []
        pair = phi_pair_initial(GRID)
        for t in ts:
            pair = phi_b_step(pair, t, 1, SHEAR, GRID, tol=1e-9)
            out = dtG_matrix(t, 1, SHEAR, GRID, pair) @ f
            vals.append(np.linalg.norm(out))
        slope = np.polyfit(np.log(ts), np.log(vals), 1)[0]
        # at least quadratic decay in t; finite grids can decay faster
        assert slope < -1.4
        assert np.all(np.diff(vals) < 0)


class TestCommutedMultiplier:
    def test_sandwich_bounds(self):
        # (1/(1+Ceps)) ||Bf|| <= ||B T2 f|| <= (1/(1-Ceps)) ||Bf||
        s = 1.0
        eta = GRID.eta
        worst = 0.0
        for t in (0.0, 2.0, 10.0):
            T = build_T2_tilde(t, 1, SHEAR, GRID).entries
            T2 = np.linalg.solve(np.eye(GRID.n_eta) - T, np.eye(GRID.n_eta))
            B = np.diag((2.0 + eta * eta) ** (s / 2))
            for seed in range(5):
                f = _rand(GRID.n_eta, seed)
                r = np.linalg.norm(B @ (T2 @ f)) / np.linalg.norm(B @ f)
                worst = max(worst, abs(r - 1.0))
        ceps = worst  # fitted C*eps over the sample
        assert ceps < 0.5
        # re-check the sandwich with the fitted constant and fresh draws
        T = build_T2_tilde(1.0, 1, SHEAR, GRID).entries
        T2 = np.linalg.solve(np.eye(GRID.n_eta) - T, np.eye(GRID.n_eta))
        B = np.diag((2.0 + eta * eta) ** (s / 2))
        for seed in range(20, 25):
            f = _rand(GRID.n_eta, seed)
            r = np.linalg.norm(B @ (T2 @ f)) / np.linalg.norm(B @ f)
            assert 1.0 / (1.0 + ceps + 1e-9) <= r <= 1.0 / (1.0 - ceps - 1e-9) \
                or abs(r - 1.0) <= ceps + 1e-9


class TestOperatorMatrix:
    def test_matmul_protocol(self):
        m = build_delta_t(0.0, 1, COUETTE, GRID)
        f = _rand(GRID.n_eta, 11)
        assert np.allclose(m @ f, m.entries @ f, atol=0)
        assert isinstance(m, OperatorMatrix)
        assert isinstance(phi_pair_initial(GRID), PhiPair)
