"""The decoupled k = 0 dynamics: a 1-D acoustic wave and the vorticity
update.

The x-averaged density/divergence pair obeys, per vertical frequency eta,

    d/dt rho = -alpha,   d/dt alpha = (eta^2 / M^2) rho,

an exact 2x2 rotation solved in closed form. The x-averaged vorticity is
slaved: d/dt omega = U' alpha + U'' v2 with v2_hat = alpha_hat / (i eta)
(zero mean), so its update is the closed-form time integral of the wave
solution convolved with the profile data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .grids import FrequencyGrid
from .operators import ProfileSpectrum

_MEAN_TOL = 1e-12


@dataclass
class ZeroModeState:
    """x-averaged fields stored as eta-spectra at k = 0."""

    grid: FrequencyGrid
    rho_bar: np.ndarray
    alpha_bar: np.ndarray
    omega_bar: np.ndarray
    t: float = 0.0
    mach: float = 1.0

    def __post_init__(self):
        n = self.grid.n_eta
        for name in ("rho_bar", "alpha_bar", "omega_bar"):
            arr = np.asarray(getattr(self, name), dtype=complex)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            setattr(self, name, arr)
        if self.mach <= 0:
            raise DomainError("mach must be positive")
        j = np.flatnonzero(self.grid.eta == 0.0)
        if j.size and abs(self.alpha_bar[j[0]]) > _MEAN_TOL:
            raise DomainError(
                "alpha_bar must have zero y-mean (eta = 0 amplitude)")


@dataclass
class ZeroModeTrajectory:
    """Closed-form wave trajectory sampled at the requested times."""

    t: np.ndarray
    rho: np.ndarray     # (n_t, n_eta)
    alpha: np.ndarray
    omega: np.ndarray
    energy: np.ndarray  # wave energy per sample


def wave_energy(grid: FrequencyGrid, rho, alpha, mach: float) -> float:
    """M^{-2} ||d_y rho||^2 + ||alpha||^2 with delta_eta quadrature."""
    eta = grid.eta
    return float(grid.delta_eta * np.sum(
        (eta / mach) ** 2 * np.abs(rho) ** 2 + np.abs(alpha) ** 2))


def _derivative_coeffs(coeffs: np.ndarray, delta_eta: float) -> np.ndarray:
    """Coefficients of f' given those of f = sum_q c_q e^{-i q d Y}."""
    qmax = coeffs.size // 2
    q = np.arange(-qmax, qmax + 1)
    return -1j * q * delta_eta * coeffs


def evolve_zero(state: ZeroModeState, profile: ProfileSpectrum,
                t_end: float, t_samples=None) -> ZeroModeTrajectory:
    """Advance the k = 0 block in closed form.

    Per eta the (rho, alpha) pair rotates at rate |eta|/M; omega is
    updated by the exact time integrals of alpha and v2 = alpha/(i eta)
    (v2 mean fixed to zero) convolved with U' = g and U'' = g'.
    """
    grid = state.grid
    if t_samples is None:
        t_samples = np.linspace(state.t, state.t + float(t_end), 201)
    ts = np.asarray(t_samples, dtype=float)
    if ts.size == 0 or np.any(ts < state.t):
        raise ValueError("t_samples must be non-empty and >= state.t")
    eta = grid.eta
    M = state.mach
    om_rate = np.abs(eta) / M
    nz = eta != 0.0
    dt = ts[:, None] - state.t
    ph = om_rate[None, :] * dt
    cos, sin = np.cos(ph), np.sin(ph)

    r0 = state.rho_bar[None, :]
    a0 = state.alpha_bar[None, :]
    inv_rate = np.where(nz, 1.0 / np.where(nz, om_rate, 1.0), 0.0)
    rho = r0 * cos - a0 * inv_rate[None, :] * sin
    alpha = r0 * om_rate[None, :] * sin + a0 * cos
    # eta = 0: rho drifts linearly by the (zero-mean) alpha; alpha const
    if np.any(~nz):
        rho[:, ~nz] = r0[:, ~nz] - a0[:, ~nz] * dt
        alpha[:, ~nz] = a0[:, ~nz]

    # closed-form integrals int_0^dt alpha ds and int v2 ds
    int_alpha = r0 * (1.0 - cos) + a0 * inv_rate[None, :] * sin
    int_alpha[:, ~nz] = a0[:, ~nz] * dt
    ieta = np.where(nz, 1j * eta, 1.0)
    int_v2 = np.where(nz[None, :], int_alpha / ieta[None, :], 0.0)

    Mg = profile.g_matrix(grid)
    gm1 = profile.coeffs["gm1"]
    dcoeffs = _derivative_coeffs(gm1, profile.delta_eta)
    dprof = ProfileSpectrum(
        delta_eta=profile.delta_eta,
        coeffs={"g2m1": np.zeros_like(gm1), "b": np.zeros_like(gm1),
                "gm1": dcoeffs})
    Cgpp = dprof.conv_matrix("gm1", grid)
    omega = state.omega_bar[None, :] \
        + int_alpha @ Mg.T + int_v2 @ Cgpp.T

    energy = np.array([wave_energy(grid, rho[j], alpha[j], M)
                       for j in range(ts.size)])
    return ZeroModeTrajectory(t=ts, rho=rho, alpha=alpha, omega=omega,
                              energy=energy)
