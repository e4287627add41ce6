"""Tests for the building-block evolutions and the toy model."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from shearspec.blocks import (
    block1_evolve,
    block2_closed_form,
    block2_evolve,
    monotone_within,
    toy_evolve,
)
from shearspec.errors import ZeroModeViolationError
from shearspec.grids import FrequencyGrid, SpectralField
from shearspec.operators import ProfileSpectrum
from shearspec.weights import WeightParams

GRID = FrequencyGrid(k_max=1, eta_max=4.0, n_eta=24)
COUETTE = ProfileSpectrum.couette(GRID.delta_eta)
SHEAR = ProfileSpectrum.harmonic(0.05, 2, GRID.delta_eta)


def _random_field(grid, seed, decay=2.0):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((2 * grid.k_max + 1, grid.n_eta)) \
        + 1j * rng.standard_normal((2 * grid.k_max + 1, grid.n_eta))
    vals *= (1.0 + grid.eta[None, :] ** 2) ** (-decay / 2)
    vals[grid.k_index(0)] = 0.0
    return SpectralField(grid, vals)


class TestBlock1:
    def test_couette_constant(self):
        f = _random_field(GRID, 0)
        run = block1_evolve(f, COUETTE, 10.0, s=1.0)
        assert np.max(np.abs(run.final.values - f.values)) < 1e-9

    def test_zero_mode_rejected(self):
        f = _random_field(GRID, 1)
        f.values[GRID.k_index(0), 3] = 1.0
        with pytest.raises(ZeroModeViolationError):
            block1_evolve(f, SHEAR, 1.0, s=1.0)

    def test_zf_monitor_non_increasing(self):
        run = block1_evolve(_random_field(GRID, 2), SHEAR, 30.0, s=1.0)
        assert monotone_within(run.monitors["zf_norm"], 1e-8)
        assert run.info["sup_ratio"] < 10.0

    def test_single_mode_tiny_grid_oracle(self):
        # 3-point eta grid, hand-assembled matrices, independent integrator
        grid = FrequencyGrid(k_max=1, eta_max=1.5, n_eta=3)
        amp, q0 = 0.05, 1
        prof = ProfileSpectrum.harmonic(amp, q0, grid.delta_eta)
        f = SpectralField.zeros(grid)
        f.set_mode(1, 0.0, 1.0)

        a = grid.delta_eta * q0
        cg = np.zeros(5, complex)
        cg[2 + q0] = cg[2 - q0] = amp / 2
        cb = np.zeros(5, complex)
        cb[2 - q0] = -amp * a / 4j
        cb[2 + q0] = np.conj(cb[2 - q0])
        i = np.arange(3)
        Cg = cg[2 + i[:, None] - i[None, :]]
        Cb = cb[2 + i[:, None] - i[None, :]]

        def rhs(t, y):
            g = y.view(complex)
            u = grid.eta - t
            p = 1.0 + u * u
            T = Cg * (-u * u / p)[None, :] + Cb * (1j * u / p)[None, :]
            inv = np.linalg.solve(np.eye(3) - T, g) / (-p)
            return (Cb @ (1j * inv)).ravel().view(float)

        y0 = f.slice_k(1).astype(complex).ravel().view(float)
        sol = solve_ivp(rhs, (0.0, 5.0), y0, rtol=1e-10, atol=1e-12)
        run = block1_evolve(f, prof, 5.0, s=1.0, tol=1e-10)
        assert np.max(np.abs(run.final.slice_k(1)
                             - sol.y[:, -1].copy().view(complex))) < 1e-7


class TestBlock2:
    def test_zero_data(self):
        run = block2_evolve(SpectralField.zeros(GRID), SHEAR, 5.0, s=1.0)
        assert np.all(run.final.values == 0)

    def test_couette_oracle(self):
        f = _random_field(GRID, 3)
        run = block2_evolve(f, COUETTE, 100.0, s=1.0, c=0.3, tol=1e-9)
        assert run.kind == "block2_couette_oracle"
        assert run.info["oracle_max_rel_err"] <= 1e-6

    def test_closed_form_initial_identity(self):
        f = _random_field(GRID, 4)
        out = block2_closed_form(f, 0.0, 0.7)
        assert np.allclose(out.values, f.values, atol=0)

    def test_mwf_monitor_non_increasing(self):
        run = block2_evolve(_random_field(GRID, 5), SHEAR, 30.0, s=1.0,
                            eps_tilde=0.05)
        assert monotone_within(run.monitors["mwf_norm"], 1e-8)
        assert np.isfinite(run.info["deltaL_bound_constant"])

    def test_deltaL_bound_constant(self):
        run = block2_evolve(_random_field(GRID, 6), SHEAR, 50.0, s=1.0,
                            eps_tilde=0.05)
        # Delta_L^{-(1+e)} f stays controlled by the data norm
        assert run.info["deltaL_bound_constant"] < 5.0


class TestToy:
    def test_zero_data(self):
        z = SpectralField.zeros(GRID)
        run = toy_evolve(z, z.copy(), SHEAR, 5.0, s=1.0)
        assert np.all(run.final[0].values == 0)
        assert np.all(run.final[1].values == 0)

    def test_functional_non_increasing_couette(self):
        r = SpectralField.zeros(GRID)
        a = SpectralField.zeros(GRID)
        r.set_mode(1, 1.0, 1.0)
        a.set_mode(1, 1.0, 0.5)
        run = toy_evolve(r, a, COUETTE, 15.0, s=1.0,
                         params=WeightParams(eps_tilde=0.05), tol=1e-9)
        assert monotone_within(run.monitors["toy_functional"], 1e-8)

    def test_functional_non_increasing_shear(self):
        run = toy_evolve(_random_field(GRID, 7), _random_field(GRID, 8),
                         SHEAR, 15.0, s=1.0,
                         params=WeightParams(eps_tilde=0.05), tol=1e-9)
        assert monotone_within(run.monitors["toy_functional"], 1e-8)

    def test_exponent_report(self):
        z = SpectralField.zeros(GRID)
        run = toy_evolve(z, z.copy(), COUETTE, 1.0, s=1.0,
                         params=WeightParams(eps_tilde=0.02))
        assert run.info["toy_sq_exponent"] == pytest.approx(2.02)
        assert run.info["optimal_sq_exponent"] == pytest.approx(1.02)

    def test_mismatched_grids_rejected(self):
        other = FrequencyGrid(k_max=1, eta_max=4.0, n_eta=16)
        with pytest.raises(ValueError):
            toy_evolve(SpectralField.zeros(GRID),
                       SpectralField.zeros(other), SHEAR, 1.0, s=1.0)
