"""Tests for grids: norms, Helmholtz splitting, moving-frame norms."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shearspec.errors import InvalidFieldError, ZeroModeViolationError
from shearspec.grids import (
    FlowState,
    FrequencyGrid,
    SobolevSpec,
    SpectralField,
    helmholtz_split,
    moving_frame_norms,
    sobolev_norm,
)


def random_field(grid, rng, no_zero_mode=True, symmetric=True):
    shape = (2 * grid.k_max + 1, grid.n_eta)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    f = SpectralField(grid, v)
    if symmetric:
        f = f.conjugate_symmetrize()
    if no_zero_mode:
        f.values[grid.k_index(0)] = 0.0
    return f


class TestGrid:
    def test_spacing_exact(self):
        g = FrequencyGrid(k_max=3, eta_max=8.0, n_eta=32)
        assert g.delta_eta * g.n_eta == 2 * g.eta_max

    @pytest.mark.parametrize("n_eta", [32, 33])
    def test_symmetric_about_zero(self, n_eta):
        g = FrequencyGrid(k_max=2, eta_max=5.0, n_eta=n_eta)
        assert np.allclose(np.sort(g.eta), np.sort(-g.eta))

    def test_odd_grid_contains_zero(self):
        g = FrequencyGrid(k_max=2, eta_max=5.0, n_eta=33)
        assert np.min(np.abs(g.eta)) == 0.0

    def test_box_length(self):
        g = FrequencyGrid(k_max=1, eta_max=4 * np.pi, n_eta=16)
        assert np.isclose(g.delta_eta, 2 * np.pi / g.box_length)


class TestSobolevNorm:
    def test_zero_field(self):
        g = FrequencyGrid(2, 4.0, 16)
        assert sobolev_norm(SpectralField.zeros(g), SobolevSpec(1, 1)) == 0.0

    def test_single_mode_s0(self):
        g = FrequencyGrid(2, 4.0, 33)
        f = SpectralField.zeros(g)
        f.set_mode(1, 0.0, 1.0)
        assert np.isclose(sobolev_norm(f, SobolevSpec(0, 0)),
                          np.sqrt(g.delta_eta), rtol=1e-14)

    def test_single_mode_s1(self):
        # mode at (k, eta) = (2, 1): <2>^2 = 5, <1>^2 = 2
        g = FrequencyGrid(3, 8.25, 33)  # delta_eta = 0.5, eta=1 on the grid
        f = SpectralField.zeros(g)
        assert 1.0 in g.eta
        f.set_mode(2, 1.0, 1.0)
        assert np.isclose(sobolev_norm(f, SobolevSpec(1, 1)),
                          np.sqrt(10 * g.delta_eta), rtol=1e-14)

    def test_nonfinite_rejected(self):
        g = FrequencyGrid(1, 4.0, 8)
        f = SpectralField.zeros(g)
        f.values[0, 0] = np.nan
        with pytest.raises(InvalidFieldError):
            sobolev_norm(f, SobolevSpec(0, 0))

    def test_refinement_stable(self):
        # doubling n_eta and eta_max together embeds the same modes
        g1 = FrequencyGrid(2, 4.0, 16)
        g2 = FrequencyGrid(2, 8.0, 32)
        rng = np.random.default_rng(0)
        f1 = random_field(g1, rng)
        f2 = SpectralField.zeros(g2)
        # same delta_eta; find each g1 sample inside g2
        for j, eta in enumerate(g1.eta):
            jj = int(np.argmin(np.abs(g2.eta - eta)))
            assert abs(g2.eta[jj] - eta) < 1e-12
            f2.values[:, jj] = f1.values[:, j]
        s = SobolevSpec(1.5, 0.5)
        n1, n2 = sobolev_norm(f1, s), sobolev_norm(f2, s)
        assert abs(n1 - n2) <= 1e-12 * n1


class TestHelmholtz:
    def test_zero_mode_rejected(self):
        g = FrequencyGrid(2, 4.0, 16)
        a = SpectralField.zeros(g)
        a.values[g.k_index(0), 3] = 1.0
        with pytest.raises(ZeroModeViolationError):
            helmholtz_split(a, SpectralField.zeros(g))

    def test_single_mode_values(self):
        g = FrequencyGrid(2, 4.0, 33)
        a = SpectralField.zeros(g)
        a.set_mode(1, 0.0, 1.0)
        (q1, q2), (p1, p2) = helmholtz_split(a, SpectralField.zeros(g))
        j = int(np.argmin(np.abs(g.eta)))
        assert q1.values[g.k_index(1), j] == 1j
        assert q2.values[g.k_index(1), j] == 0
        assert not p1.values.any() and not p2.values.any()

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10 ** 6))
    def test_orthogonality_and_reconstruction(self, seed):
        g = FrequencyGrid(3, 6.0, 24)
        rng = np.random.default_rng(seed)
        a = random_field(g, rng)
        w = random_field(g, rng)
        (q1, q2), (p1, p2) = helmholtz_split(a, w)
        # orthogonality <Q, P> = 0
        inner = np.sum(q1.values * np.conj(p1.values)
                       + q2.values * np.conj(p2.values))
        scale = np.linalg.norm(q1.values) * np.linalg.norm(p1.values) + 1e-30
        assert abs(inner) <= 1e-12 * max(scale, 1.0)
        # div(Q+P) = alpha, curl(Q+P) = omega; derivatives act as
        # (-ik, -i eta) in this transform convention
        k = g.k_values[:, None].astype(float)
        eta = g.eta[None, :]
        v1 = q1.values + p1.values
        v2 = q2.values + p2.values
        div = -(1j * k * v1 + 1j * eta * v2)
        curl = -(1j * k * v2 - 1j * eta * v1)
        assert np.max(np.abs(div - a.values)) <= 1e-12 * (
            np.max(np.abs(a.values)) + 1)
        assert np.max(np.abs(curl - w.values)) <= 1e-12 * (
            np.max(np.abs(w.values)) + 1)


class TestMovingFrameNorms:
    def _state(self, grid, R=None, A=None, W=None, t=0.0, mach=1.0):
        z = lambda f: f if f is not None else SpectralField.zeros(grid)
        return FlowState(z(R), z(A), z(W), t=t, mach=mach, w_kind="omega")

    def test_zero_state(self):
        g = FrequencyGrid(2, 4.0, 16)
        out = moving_frame_norms(self._state(g))
        assert all(v == 0.0 for v in out.values())

    def test_single_a_mode(self):
        g = FrequencyGrid(2, 4.0, 33)
        A = SpectralField.zeros(g)
        A.set_mode(1, 0.0, 1.0)
        out = moving_frame_norms(self._state(g, A=A))
        assert np.isclose(out["q_energy"], g.delta_eta, rtol=1e-14)

    def test_omega_mode_at_critical_time(self):
        # t=3, mode at (1, 3): eta - kt = 0 so p1 = 0, p2^2 = delta_eta
        g = FrequencyGrid(2, 8.25, 33)
        W = SpectralField.zeros(g)
        assert 3.0 in g.eta
        W.set_mode(1, 3.0, 1.0)
        out = moving_frame_norms(self._state(g, W=W, t=3.0))
        assert out["p1_norm"] == 0.0
        assert np.isclose(out["p2_norm"] ** 2, g.delta_eta, rtol=1e-14)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10 ** 6), t=st.floats(0, 20))
    def test_plancherel_consistency(self, seed, t):
        # q_energy + M^-2 rho^2 == sum p (|A/p^{3/4}|^2 + |R/(M p^{1/4})|^2)
        g = FrequencyGrid(2, 6.0, 24)
        rng = np.random.default_rng(seed)
        R, A = random_field(g, rng), random_field(g, rng)
        mach = 0.5
        st8 = self._state(g, R=R, A=A, t=t, mach=mach)
        out = moving_frame_norms(st8)
        lhs = out["q_energy"] + out["rho_norm"] ** 2 / mach ** 2
        k = g.k_values[:, None].astype(float)
        eta = g.eta[None, :]
        p = k * k + (eta - k * t) ** 2
        p[g.k_index(0)] = 1.0
        rhs = g.delta_eta * np.sum(
            np.sqrt(p) * (np.abs(A.values / p ** 0.75) ** 2
                          + np.abs(R.values / (mach * p ** 0.25)) ** 2))
        assert np.isclose(lhs, rhs, rtol=1e-12)
