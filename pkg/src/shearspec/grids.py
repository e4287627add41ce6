"""Frequency grids, spectral fields, Sobolev norms and velocity splittings.

The (x, y) domain is a periodic strip; fields are stored by their Fourier
amplitudes over integer horizontal wavenumbers k and a uniform grid of
vertical frequencies eta. All eta sums carry the quadrature weight
delta_eta so that norms are stable under grid refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidFieldError, ZeroModeViolationError


def bracket(a):
    """Japanese bracket <a> = sqrt(1 + |a|^2), elementwise."""
    a = np.asarray(a, dtype=float)
    return np.sqrt(1.0 + a * a)


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform truncation of the (k, eta) frequency plane.

    k runs over {-k_max, ..., k_max}; eta over n_eta uniformly spaced
    samples symmetric about 0 with spacing delta_eta = 2*eta_max/n_eta
    (for even n_eta the samples sit at half-integer multiples of
    delta_eta, for odd n_eta the grid contains 0).
    """

    k_max: int
    eta_max: float
    n_eta: int

    def __post_init__(self):
        if self.k_max < 1 or self.n_eta < 1 or self.eta_max <= 0:
            raise ValueError("k_max, n_eta must be >= 1 and eta_max > 0")

    @property
    def delta_eta(self) -> float:
        return 2.0 * self.eta_max / self.n_eta

    @property
    def eta(self) -> np.ndarray:
        j = np.arange(self.n_eta, dtype=float)
        return (j - (self.n_eta - 1) / 2.0) * self.delta_eta

    @property
    def k_values(self) -> np.ndarray:
        return np.arange(-self.k_max, self.k_max + 1)

    @property
    def box_length(self) -> float:
        """Vertical period L_y with delta_eta = 2*pi/L_y."""
        return 2.0 * np.pi / self.delta_eta

    def k_index(self, k: int) -> int:
        if abs(k) > self.k_max:
            raise ValueError(f"|k|={abs(k)} exceeds k_max={self.k_max}")
        return int(k) + self.k_max


@dataclass
class SpectralField:
    """Complex amplitudes per (k, eta) sample on a FrequencyGrid."""

    grid: FrequencyGrid
    values: np.ndarray  # shape (2*k_max+1, n_eta), complex

    def __post_init__(self):
        expected = (2 * self.grid.k_max + 1, self.grid.n_eta)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")

    @classmethod
    def zeros(cls, grid: FrequencyGrid) -> "SpectralField":
        return cls(grid, np.zeros((2 * grid.k_max + 1, grid.n_eta), complex))

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.values.copy())

    def slice_k(self, k: int) -> np.ndarray:
        return self.values[self.grid.k_index(k)]

    def set_mode(self, k: int, eta: float, amplitude: complex):
        """Set the amplitude at the grid sample closest to (k, eta)."""
        j = int(np.argmin(np.abs(self.grid.eta - eta)))
        self.values[self.grid.k_index(k), j] = amplitude

    def is_conjugate_symmetric(self, tol: float = 1e-12) -> bool:
        flipped = np.conj(self.values[::-1, ::-1])
        scale = np.max(np.abs(self.values)) or 1.0
        return bool(np.max(np.abs(self.values - flipped)) <= tol * scale)

    def conjugate_symmetrize(self) -> "SpectralField":
        sym = 0.5 * (self.values + np.conj(self.values[::-1, ::-1]))
        return SpectralField(self.grid, sym)


@dataclass(frozen=True)
class SobolevSpec:
    """Anisotropic Sobolev regularity indices (s1 in x, s2 in y)."""

    s1: float
    s2: float

    @classmethod
    def isotropic(cls, s: float) -> "SobolevSpec":
        return cls(s, s)


@dataclass
class FlowState:
    """State of the linearized system on the moving frame.

    W holds the third unknown: the vorticity for Couette runs
    (w_kind="omega") or the conserved combination vorticity + g*density
    for near-Couette runs (w_kind="xi").
    """

    R: SpectralField
    A: SpectralField
    W: SpectralField
    t: float
    mach: float
    w_kind: str = "omega"

    def __post_init__(self):
        if self.w_kind not in ("omega", "xi"):
            raise ValueError("w_kind must be 'omega' or 'xi'")
        if self.mach <= 0:
            raise ValueError("mach must be positive")
        if not (self.R.grid == self.A.grid == self.W.grid):
            raise ValueError("fields must share one grid")


def _check_finite(f: SpectralField):
    if not np.all(np.isfinite(f.values)):
        raise InvalidFieldError("field has non-finite amplitudes")


def _check_no_zero_mode(f: SpectralField):
    row = f.values[f.grid.k_index(0)]
    if np.any(row != 0):
        raise ZeroModeViolationError(
            "nonzero k=0 content; route it through the zeromode module"
        )


def sobolev_norm(f: SpectralField, spec: SobolevSpec) -> float:
    """Weighted-l2 Sobolev norm with delta_eta quadrature.

    Returns sqrt( sum_k delta_eta * sum_eta <k>^{2 s1} <eta>^{2 s2}
    |f(k,eta)|^2 ).
    """
    _check_finite(f)
    g = f.grid
    wk = bracket(g.k_values) ** (2.0 * spec.s1)
    we = bracket(g.eta) ** (2.0 * spec.s2)
    total = g.delta_eta * np.sum(wk[:, None] * we[None, :] * np.abs(f.values) ** 2)
    return float(np.sqrt(total))


def weighted_sq_sum(grid: FrequencyGrid, weights: np.ndarray,
                    values: np.ndarray) -> float:
    """sum_k delta_eta * sum_eta weights*|values|^2 (helper for monitors)."""
    return float(grid.delta_eta * np.sum(weights * np.abs(values) ** 2))


def helmholtz_split(alpha: SpectralField, omega: SpectralField):
    """Split velocity into irrotational Q (from alpha) and solenoidal P.

    Q = (ik, i eta) alpha / (k^2 + eta^2); P = (-i eta, ik) omega /
    (k^2 + eta^2). Requires zero k=0 content.

    Returns ((Q1, Q2), (P1, P2)) as SpectralFields.
    """
    if alpha.grid != omega.grid:
        raise ValueError("fields must share one grid")
    _check_finite(alpha)
    _check_finite(omega)
    _check_no_zero_mode(alpha)
    _check_no_zero_mode(omega)
    g = alpha.grid
    k = g.k_values[:, None].astype(float)
    eta = g.eta[None, :]
    lap = k * k + eta * eta
    # k=0 row of the data is zero; avoid 0/0 there.
    lap_safe = np.where(lap == 0, 1.0, lap)
    q1 = 1j * k * alpha.values / lap_safe
    q2 = 1j * eta * alpha.values / lap_safe
    p1 = -1j * eta * omega.values / lap_safe
    p2 = 1j * k * omega.values / lap_safe
    mk = lambda v: SpectralField(g, v)
    return (mk(q1), mk(q2)), (mk(p1), mk(p2))


def p_symbol(grid: FrequencyGrid, t: float) -> np.ndarray:
    """p = k^2 + (eta - k t)^2 over the full (k, eta) grid (inf at k=0).

    The k=0 row is set to inf so accidental use divides to zero rather
    than blowing up silently.
    """
    k = grid.k_values[:, None].astype(float)
    eta = grid.eta[None, :]
    p = k * k + (eta - k * t) ** 2
    p[grid.k_index(0), :] = np.inf
    return p


def moving_frame_norms(state: FlowState, profile=None) -> dict:
    """Energy-type norms of a moving-frame state.

    q_energy  = sum_k int |A|^2 / p
    rho_norm2 = sum_k int |R|^2
    p1_norm2  = sum_k int (eta - k t)^2 |Omega|^2 / p^2
    p2_norm2  = sum_k int k^2 |Omega|^2 / p^2
    all with delta_eta quadrature; Omega is W directly (w_kind="omega")
    or W - g*R reconstructed through the profile (w_kind="xi").

    Returns {"q_energy", "rho_norm", "p1_norm", "p2_norm"}.
    """
    for f in (state.R, state.A, state.W):
        _check_finite(f)
        _check_no_zero_mode(f)
    g = state.R.grid
    t = state.t
    k = g.k_values[:, None].astype(float)
    eta = g.eta[None, :]
    p = p_symbol(g, t)

    if state.w_kind == "omega":
        om = state.W.values
    else:
        if profile is None:
            raise ValueError("w_kind='xi' requires a profile to recover omega")
        om = state.W.values.copy()
        conv = profile.conv_matrix("gm1", g)
        for kk in g.k_values:
            if kk == 0:
                continue
            i = g.k_index(kk)
            om[i] -= state.R.values[i] + conv @ state.R.values[i]

    q_energy = weighted_sq_sum(g, np.where(np.isinf(p), 0.0, 1.0 / p),
                               state.A.values)
    rho2 = weighted_sq_sum(g, np.ones_like(p), state.R.values)
    inv_p2 = np.where(np.isinf(p), 0.0, 1.0 / p ** 2)
    p1_2 = weighted_sq_sum(g, (eta - k * t) ** 2 * inv_p2, om)
    p2_2 = weighted_sq_sum(g, k * k * inv_p2, om)
    return {
        "q_energy": q_energy,
        "rho_norm": float(np.sqrt(rho2)),
        "p1_norm": float(np.sqrt(p1_2)),
        "p2_norm": float(np.sqrt(p2_2)),
    }
