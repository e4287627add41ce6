"""Time-dependent operator algebra for near-Couette monotone shears.

All operators act per nonzero x-wavenumber k as dense matrices over the
eta grid. Multiplication by a periodic profile function of Y becomes a
Toeplitz convolution matrix in frequency space; derivatives act as the
diagonal multipliers X -> ik, (Y - t X) -> i(eta - k t). The central
objects are

    Delta_t = dXX + g^2 (dY - t dX)^2 + b (dY - t dX),

its inverse through the Neumann factorization Delta_t = (I - T2t) Delta_L
with the Couette Laplacian Delta_L = diag(-p), and the transport
operators Phi_b, Phi-tilde and G that close the vorticity reconstruction.
Profile sizes are measured so the contraction ||T2t|| < 1 is checked, not
assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    ContractionFailureError,
    DomainError,
    IntegrationFailureError,
)
from .grids import FrequencyGrid, bracket

_DTG_MAX_ETA = 256  # dense five-matrix products: verification scale only


# ---------------------------------------------------------------------------
# profiles

@dataclass(frozen=True)
class ProfileSpectrum:
    """Fourier data of the shear profile quantities g^2-1, b and g-1.

    Coefficients are Fourier-series coefficients on the periodic box of
    length 2 pi / delta_eta, stored centered over integer harmonics
    -q_max..q_max (entry q of a function f(Y) = sum_q c_q e^{-i q
    delta_eta Y}). eps_measured reports the largest H^1-type coefficient
    norm among the three stored functions.
    """

    delta_eta: float
    coeffs: dict = field(repr=False)
    eps_measured: float = 0.0

    _NAMES = ("g2m1", "b", "gm1")

    def __post_init__(self):
        for name in self._NAMES:
            if name not in self.coeffs:
                raise ValueError(f"missing profile coefficients {name!r}")
            c = self.coeffs[name]
            if c.size % 2 != 1:
                raise ValueError("coefficient arrays must be centered")
        for name in ("g2m1", "b"):  # real-valued profile functions
            c = self.coeffs[name]
            if not np.allclose(c, np.conj(c[::-1]), atol=1e-12):
                raise DomainError(f"profile {name} is not real-valued")

    @property
    def is_couette(self) -> bool:
        return all(np.all(self.coeffs[n] == 0) for n in self._NAMES)

    @classmethod
    def couette(cls, delta_eta: float) -> "ProfileSpectrum":
        z = np.zeros(1, dtype=complex)
        return cls(delta_eta=delta_eta,
                   coeffs={"g2m1": z, "b": z.copy(), "gm1": z.copy()})

    @classmethod
    def harmonic(cls, amplitude: float, q0: int,
                 delta_eta: float, n_samples: int = 256) -> "ProfileSpectrum":
        """Single-harmonic shear: g^2 - 1 = amplitude * cos(q0 delta_eta Y).

        b = (g^2)'/2 follows from an actual monotone profile g = U'; the
        g-1 coefficients come from an FFT of sqrt(g^2) - 1.
        """
        if not (0 <= amplitude < 1):
            raise DomainError("amplitude must lie in [0, 1)")
        if q0 < 1 or n_samples < 8 * q0:
            raise DomainError("need q0 >= 1 and n_samples >= 8*q0")
        qmax = max(n_samples // 2 - 1, q0)
        a = delta_eta * q0
        y = 2.0 * np.pi / delta_eta * np.arange(n_samples) / n_samples
        coeffs = {}
        # cos/sin harmonics have exact two-sided coefficients in the
        # e^{-i q delta_eta Y} basis
        c = np.zeros(2 * qmax + 1, dtype=complex)
        c[qmax + q0] = c[qmax - q0] = 0.5 * amplitude
        coeffs["g2m1"] = c
        c = np.zeros(2 * qmax + 1, dtype=complex)
        c[qmax - q0] = -0.5 * amplitude * a / (2.0j)
        c[qmax + q0] = np.conj(c[qmax - q0])
        coeffs["b"] = c
        gm1 = np.sqrt(1.0 + amplitude * np.cos(a * y)) - 1.0
        spec = np.fft.ifft(gm1)  # c_q = (1/N) sum f_l e^{+2 pi i q l / N}
        c = np.zeros(2 * qmax + 1, dtype=complex)
        for q in range(-qmax, qmax + 1):
            c[qmax + q] = spec[q % n_samples]
        coeffs["gm1"] = c
        eps = 0.0
        for name in cls._NAMES:
            q = np.arange(-qmax, qmax + 1) * delta_eta
            eps = max(eps, float(np.sqrt(np.sum(
                bracket(q) ** 2 * np.abs(coeffs[name]) ** 2))))
        return cls(delta_eta=delta_eta, coeffs=coeffs, eps_measured=eps)

    def conv_matrix(self, name: str, grid: FrequencyGrid) -> np.ndarray:
        """Dense Toeplitz matrix of multiplication by the named function."""
        if abs(grid.delta_eta - self.delta_eta) > 1e-12 * self.delta_eta:
            raise DomainError("profile and grid eta spacings differ")
        c = self.coeffs[name]
        qmax = c.size // 2
        n = grid.n_eta
        full = np.zeros(2 * n - 1, dtype=complex)
        lo = max(-qmax, -(n - 1))
        hi = min(qmax, n - 1)
        full[n - 1 + lo:n - 1 + hi + 1] = c[qmax + lo:qmax + hi + 1]
        i = np.arange(n)
        return full[(n - 1) + (i[:, None] - i[None, :])]

    def g_matrix(self, grid: FrequencyGrid) -> np.ndarray:
        """Multiplication by g = 1 + (g - 1)."""
        return np.eye(grid.n_eta) + self.conv_matrix("gm1", grid)


# ---------------------------------------------------------------------------
# core matrices

@dataclass(frozen=True)
class OperatorMatrix:
    """A per-k dense operator over the eta grid at a fixed time."""

    k: int
    t: float
    entries: np.ndarray

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return self.entries @ other.entries
        return self.entries @ other


def _check_k(k):
    if k == 0:
        raise DomainError("k = 0 modes are handled by the zeromode module")
    return float(k)


def _symbols(t, k, grid):
    u = grid.eta - float(k) * t
    p = float(k) ** 2 + u * u
    return u, p


def build_delta_t(t, k, profile: ProfileSpectrum,
                  grid: FrequencyGrid) -> OperatorMatrix:
    """Delta_t = diag(-p) + Conv(g^2-1) diag(-u^2) + Conv(b) diag(iu)."""
    _check_k(k)
    u, p = _symbols(t, k, grid)
    m = np.diag(-p).astype(complex)
    if not profile.is_couette:
        m += profile.conv_matrix("g2m1", grid) * (-u * u)[None, :]
        m += profile.conv_matrix("b", grid) * (1j * u)[None, :]
    return OperatorMatrix(k=k, t=t, entries=m)


def build_T2_tilde(t, k, profile: ProfileSpectrum,
                   grid: FrequencyGrid) -> OperatorMatrix:
    """The Neumann block of Delta_t = (I - T2t) Delta_L.

    T2t = Conv(g^2-1) diag(-u^2/p) + Conv(b) diag(iu/p); the signs are
    fixed so the factorization holds to rounding (right-multiplying by
    Delta_L = diag(-p) reproduces the profile part of Delta_t exactly).
    """
    _check_k(k)
    u, p = _symbols(t, k, grid)
    m = np.zeros((grid.n_eta, grid.n_eta), dtype=complex)
    if not profile.is_couette:
        m += profile.conv_matrix("g2m1", grid) * (-u * u / p)[None, :]
        m += profile.conv_matrix("b", grid) * (1j * u / p)[None, :]
    return OperatorMatrix(k=k, t=t, entries=m)


def t2_tilde_norm(t, k, profile, grid) -> float:
    """Spectral norm of T2t (dense; the contraction certificate)."""
    return float(np.linalg.norm(build_T2_tilde(t, k, profile, grid).entries,
                                2))


def apply_T2(t, k, profile, grid, f_slice, method="direct",
             tol=1e-10, n_max=400):
    """T2 f = (I - T2t)^{-1} f, by direct solve or Neumann summation."""
    f = np.asarray(f_slice, dtype=complex)
    T = build_T2_tilde(t, k, profile, grid).entries
    nrm = float(np.linalg.norm(T, 2))
    if nrm >= 1.0:
        raise ContractionFailureError(
            f"||T2_tilde|| = {nrm:.3f} >= 1 at t={t}, k={k}")
    if method == "direct":
        return np.linalg.solve(np.eye(grid.n_eta) - T, f)
    if method == "neumann":
        out = f.copy()
        term = f
        fn = np.linalg.norm(f)
        for _ in range(n_max):
            term = T @ term
            out += term
            if np.linalg.norm(term) < tol * (fn + 1e-300):
                return out
        raise ContractionFailureError("Neumann series did not converge")
    raise ValueError(f"unknown method {method!r}")


def delta_t_inv_matrix(t, k, profile, grid) -> np.ndarray:
    """Dense Delta_t^{-1} = Delta_L^{-1} (I - T2t)^{-1}."""
    _check_k(k)
    _, p = _symbols(t, k, grid)
    T = build_T2_tilde(t, k, profile, grid).entries
    nrm = float(np.linalg.norm(T, 2))
    if nrm >= 1.0:
        raise ContractionFailureError(
            f"||T2_tilde|| = {nrm:.3f} >= 1 at t={t}, k={k}")
    T2 = np.linalg.solve(np.eye(grid.n_eta) - T, np.eye(grid.n_eta))
    return (-1.0 / p)[:, None] * T2


def apply_delta_t_inv(t, k, profile, grid, f_slice):
    """Delta_t^{-1} f with the Couette fast path."""
    f = np.asarray(f_slice, dtype=complex)
    _check_k(k)
    _, p = _symbols(t, k, grid)
    if profile.is_couette:
        return f / (-p)
    return apply_T2(t, k, profile, grid, f) / (-p)


def dt_delta_L(t, k, grid) -> np.ndarray:
    """Diagonal symbol of d/dt Delta_L: 2 k (eta - k t) (= -p')."""
    _check_k(k)
    u, _ = _symbols(t, k, grid)
    return 2.0 * float(k) * u


def dt_delta_t_matrix(t, k, profile, grid) -> np.ndarray:
    """d/dt of build_delta_t: (I + Conv(g^2-1)) diag(2ku) - ik Conv(b)."""
    _check_k(k)
    u, _ = _symbols(t, k, grid)
    m = np.diag(2.0 * float(k) * u).astype(complex)
    if not profile.is_couette:
        m += profile.conv_matrix("g2m1", grid) * (2.0 * float(k) * u)[None, :]
        m -= 1j * float(k) * profile.conv_matrix("b", grid)
    return m


def dt_delta_t_inv_matrix(t, k, profile, grid) -> np.ndarray:
    """d/dt Delta_t^{-1} = -Delta_t^{-1} (d/dt Delta_t) Delta_t^{-1}."""
    inv = delta_t_inv_matrix(t, k, profile, grid)
    return -inv @ dt_delta_t_matrix(t, k, profile, grid) @ inv


# ---------------------------------------------------------------------------
# transport operators

@dataclass
class PhiPair:
    """The evolution operator Phi_b(0, t) and its b-isolating companion.

    Satisfies Phi_b(0,t)^{-1} = I + Conv(b) Phi_tilde and the generator
    ODEs d/dt Phi_b = A Phi_b, d/dt Phi_tilde = -dX Delta_t^{-1}
    - Phi_tilde A with A = Conv(b) dX Delta_t^{-1}.
    """

    t: float
    phi_b: np.ndarray
    phi_tilde: np.ndarray


def phi_pair_initial(grid: FrequencyGrid) -> PhiPair:
    n = grid.n_eta
    return PhiPair(t=0.0, phi_b=np.eye(n, dtype=complex),
                   phi_tilde=np.zeros((n, n), dtype=complex))


def phi_b_step(pair: PhiPair, t1, k, profile, grid, tol=1e-10) -> PhiPair:
    """Advance (Phi_b, Phi_tilde) from pair.t to t1."""
    _check_k(k)
    n = grid.n_eta
    if t1 == pair.t:
        return pair
    Cb = profile.conv_matrix("b", grid)

    def rhs(t, y):
        z = y.view(complex).reshape(2, n, n)
        dxinv = 1j * float(k) * delta_t_inv_matrix(t, k, profile, grid)
        A = Cb @ dxinv
        out = np.empty_like(z)
        out[0] = A @ z[0]
        out[1] = -dxinv - z[1] @ A
        return out.ravel().view(float)

    y0 = np.stack([pair.phi_b, pair.phi_tilde]).ravel().view(float)
    sol = solve_ivp(rhs, (pair.t, float(t1)), y0, method="RK45",
                    rtol=tol, atol=tol)
    if not sol.success:
        raise IntegrationFailureError(sol.message)
    z = sol.y[:, -1].copy().view(complex).reshape(2, n, n)
    return PhiPair(t=float(t1), phi_b=z[0], phi_tilde=z[1])


def phi_b_inverse(pair: PhiPair, profile, grid) -> np.ndarray:
    """Phi_b(t, 0) = I + Conv(b) Phi_tilde (no dense inversion)."""
    return np.eye(grid.n_eta) + profile.conv_matrix("b", grid) \
        @ pair.phi_tilde


def G_matrix(t, k, profile, grid, phi_tilde) -> np.ndarray:
    """G = g (dY - t dX) Delta_t^{-1} + Phi_tilde (g + b g (dY - t dX)
    Delta_t^{-1})."""
    _check_k(k)
    u, _ = _symbols(t, k, grid)
    inv = delta_t_inv_matrix(t, k, profile, grid)
    Mg = profile.g_matrix(grid).astype(complex)
    Cb = profile.conv_matrix("b", grid)
    core = Mg @ ((1j * u)[:, None] * inv)
    return core + phi_tilde @ (Mg + Cb @ core)


def G_apply(t, k, profile, grid, phi_tilde, f_slice):
    return G_matrix(t, k, profile, grid, phi_tilde) \
        @ np.asarray(f_slice, dtype=complex)


def dtG_matrix(t, k, profile, grid, pair: PhiPair) -> np.ndarray:
    """Exact time derivative of G by the product rule.

    d/dt [(dY - t dX) Delta_t^{-1}] = -dX Delta_t^{-1}
    + (dY - t dX) d/dt Delta_t^{-1}, and d/dt Phi_tilde from its
    generator ODE; certified against central differences of G.
    """
    _check_k(k)
    if grid.n_eta > _DTG_MAX_ETA:
        raise DomainError("dtG is restricted to verification-size grids")
    u, _ = _symbols(t, k, grid)
    inv = delta_t_inv_matrix(t, k, profile, grid)
    dinv = dt_delta_t_inv_matrix(t, k, profile, grid)
    Mg = profile.g_matrix(grid).astype(complex)
    Cb = profile.conv_matrix("b", grid)
    dxinv = 1j * float(k) * inv
    core = (1j * u)[:, None] * inv            # (dY - t dX) Delta_t^{-1}
    dcore = -dxinv + (1j * u)[:, None] * dinv
    A = Cb @ dxinv
    dphi_tilde = -dxinv - pair.phi_tilde @ A
    return (Mg @ dcore
            + dphi_tilde @ (Mg + Cb @ (Mg @ core))
            + pair.phi_tilde @ (Cb @ (Mg @ dcore)))


def dtG_apply(t, k, profile, grid, pair: PhiPair, f_slice):
    return dtG_matrix(t, k, profile, grid, pair) \
        @ np.asarray(f_slice, dtype=complex)
