"""Per-mode dynamics at the Couette flow.

Each Fourier mode (k, eta) with k != 0 carries the symmetrized 2x2
non-autonomous system

    dZ/dt = L(t) Z + F(t) Xi_in,
    L = [[-p'/(4p), -sqrt(p)/M], [sqrt(p)/M + 2 M k^2/p^{3/2}, p'/(4p)]],
    F = (0, -2 k^2 / p^{7/4}),

whose rotation rate sqrt(p)/M makes brute-force stepping impractical at
large t or small M. The default engine factors out the exact rotation
phase and advances the slow envelope with first-order Magnus steps whose
coefficient integrals are evaluated either by Gauss-Legendre quadrature
(small step phase) or by repeated integration by parts with
Taylor-series endpoint derivatives (large phase). A literal
Runge-Kutta co-integration of (Z, Y, Gamma) is kept as the reference
method for cross-validation at modest times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from ._series import tderiv, tdiv, tpow
from .errors import (
    ConstructionFailureError,
    DomainError,
    IntegrationFailureError,
)
from .grids import bracket

_GLX, _GLW = np.polynomial.legendre.leggauss(48)
_PHASE_GL_MAX = 40.0  # max step phase (radians) handled by quadrature
_IBP_TERMS = 5
_DP_SWITCH = 3.0      # phase per step below which direct RK wins

# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


# ---------------------------------------------------------------------------
# coefficients and exact phase

def _check_mode_args(k, M):
    k = np.asarray(k, dtype=float)
    if np.any(k == 0):
        raise DomainError("k = 0 modes are handled by the zeromode module")
    if M <= 0:
        raise DomainError("Mach number must be positive")
    return k


def assemble_L_F(t, k, eta, M):
    """The 2x2 drift matrix L(t) (traceless) and forcing direction F(t)."""
    _check_mode_args(k, M)
    u = eta - k * t
    p = k * k + u * u
    pp = -2.0 * k * u
    a = pp / (4.0 * p)
    b = np.sqrt(p) / M
    c = 2.0 * M * k * k / p ** 1.5
    L = np.array([[-a, -b], [b + c, a]])
    F = np.array([0.0, -2.0 * k * k / p ** 1.75])
    return L, F


def phase_theta(t, k, eta, M):
    """Accumulated rotation phase theta(t) = (1/M) int_0^t sqrt(p) ds.

    Closed form through the antiderivative of sqrt(k^2 + u^2).
    """
    k = np.asarray(k, dtype=float)
    u = k * t - eta

    def phi(u):
        return 0.5 * (u * np.sqrt(k * k + u * u)
                      + k * k * np.arcsinh(u / np.abs(k)))

    return (phi(u) - phi(-np.asarray(eta, dtype=float))) / (k * M)


def _coeffs(kf, eta, M, t):
    """Slow envelope coefficients (a, c, f2) and p at times t."""
    u = eta - kf * t
    p = kf * kf + u * u
    a = -2.0 * kf * u / (4.0 * p)
    c = 2.0 * M * kf * kf * p ** -1.5
    f2 = -2.0 * kf * kf * p ** -1.75
    return a, c, f2, p


def _taylor_stacks(kf, eta, M, t, order):
    """Taylor stacks (a, b, c, f2) of the coefficients at points t."""
    u = eta - kf * t
    shape = np.broadcast_shapes(np.shape(kf), np.shape(t))
    p = np.zeros((order + 1,) + shape)
    p[0] = kf * kf + u * u
    p[1] = -2.0 * kf * u
    p[2] = kf * kf
    pp = np.zeros_like(p)
    pp[0] = p[1]
    pp[1] = 2.0 * kf * kf
    b = tpow(p, 0.5) / M
    a = tdiv(pp, 4.0 * p)
    c = 2.0 * M * kf * kf * tpow(p, -1.5)
    f2 = -2.0 * kf * kf * tpow(p, -1.75)
    return a, b, c, f2


# ---------------------------------------------------------------------------
# oscillatory integrals

def _ibp_terms(f_tay, b_tay, q, n_terms):
    """Endpoint values of the integration-by-parts ladder g_j / (i q b)."""
    g = f_tay.astype(complex)
    D = (1j * q) * b_tay.astype(complex)
    vals = []
    for _ in range(n_terms + 1):
        ratio = tdiv(g, D)
        vals.append(ratio[0])
        g = tderiv(ratio)
        D = D[:-1]
    return vals


def _ibp_integral(stacks0, stacks1, which, q, dtheta):
    """int f e^{i q (theta-theta0)} dt by repeated integration by parts.

    stacks0/stacks1: (a, b, c, f2) Taylor stacks at the two endpoints;
    `which` selects the integrand. Returns (value, error proxy), the
    proxy being the magnitude of the first neglected boundary term.
    """
    f0, b0 = stacks0[which], stacks0[1]
    f1, b1 = stacks1[which], stacks1[1]
    e1 = np.exp(1j * q * dtheta)
    v0 = _ibp_terms(f0, b0, q, _IBP_TERMS)
    v1 = _ibp_terms(f1, b1, q, _IBP_TERMS)
    total = np.zeros_like(v0[0])
    sign = 1.0
    for j in range(_IBP_TERMS):
        total = total + sign * (v1[j] * e1 - v0[j])
        sign = -sign
    err = np.abs(v0[_IBP_TERMS]) + np.abs(v1[_IBP_TERMS])
    return total, err


def _magnus_pieces(kf, eta, M, t0, t1, th0, th1):
    """One Magnus step's propagators and forcing integral.

    Returns (Phi, Phi_half, dI, err_prop, err_force) for the interval
    [t0, t1], all vectorized over modes. dI = int Rot(-theta) F dt is a
    real 2-vector per mode.
    """
    dth = th1 - th0
    m = t0.size
    A2 = np.zeros(m, complex)
    C2 = np.zeros(m, complex)
    F1 = np.zeros(m, complex)
    err_a = np.zeros(m)
    err_c = np.zeros(m)
    err_f = np.zeros(m)

    small = 2.0 * dth <= _PHASE_GL_MAX
    if np.any(small):
        s = np.flatnonzero(small)
        hm = 0.5 * (t1[s] - t0[s])
        mid = 0.5 * (t0[s] + t1[s])
        ts = mid[None, :] + hm[None, :] * _GLX[:, None]
        a, c, f2, _ = _coeffs(kf[s][None, :], eta[s][None, :], M, ts)
        rel = phase_theta(ts, kf[s][None, :], eta[s][None, :], M) \
            - th0[s][None, :]
        e1 = np.exp(1j * rel)
        e2 = e1 * e1
        w = _GLW[:, None]
        A2[s] = hm * np.sum(w * a * e2, axis=0)
        C2[s] = hm * np.sum(w * c * e2, axis=0)
        F1[s] = hm * np.sum(w * f2 * e1, axis=0)
    if not np.all(small):
        s = np.flatnonzero(~small)
        order = _IBP_TERMS + 1
        st0 = _taylor_stacks(kf[s], eta[s], M, t0[s], order)
        st1 = _taylor_stacks(kf[s], eta[s], M, t1[s], order)
        A2[s], err_a[s] = _ibp_integral(st0, st1, 0, 2.0, dth[s])
        C2[s], err_c[s] = _ibp_integral(st0, st1, 2, 2.0, dth[s])
        F1[s], err_f[s] = _ibp_integral(st0, st1, 3, 1.0, dth[s])

    # closed-form int c dt
    u0 = kf * t0 - eta
    u1 = kf * t1 - eta
    Wc = (2.0 * M / kf) * (u1 / np.sqrt(kf * kf + u1 * u1)
                           - u0 / np.sqrt(kf * kf + u0 * u0))
    W2 = _secular_phase(kf, eta, M, t1) - _secular_phase(kf, eta, M, t0)
    ph2 = np.exp(2j * th0)
    ph1 = np.exp(1j * th0)
    A2a = ph2 * A2
    C2a = ph2 * C2
    X = -A2a.real + 0.5 * C2a.imag
    Yv = A2a.imag + 0.5 * C2a.real
    W = 0.5 * Wc + W2
    Phi = _expm_traceless(X, Yv, W)
    Phih = _expm_traceless(0.5 * X, 0.5 * Yv, 0.5 * W)
    G1 = ph1 * F1
    dI = np.stack([G1.imag, G1.real])
    return Phi, Phih, dI, err_a + 0.5 * err_c, err_f


def _secular_phase(kf, eta, M, t):
    """Antiderivative of the secular second-order phase density.

    The second Magnus term's non-oscillatory part is a pure rotation with
    density -(a^2 + c^2/4) M / (2 sqrt(p)); in u = t - eta/k this is
    elementary and integrates in closed form.
    """
    u = t - eta / kf
    ak = np.abs(kf)
    q = 1.0 + u * u
    # int u^2 (1+u^2)^{-5/2} du and the odd-power reduction for
    # int (1+u^2)^{-7/2} du
    int1 = u ** 3 / (3.0 * q ** 1.5)
    i3 = u / np.sqrt(q)
    i5 = (u / q ** 1.5 + 2.0 * i3) / 3.0
    i7 = (u / q ** 2.5 + 4.0 * i5) / 5.0
    return -(M / (8.0 * ak) * int1 + M ** 3 / (2.0 * ak ** 3) * i7)


def _expm_traceless(X, Yv, W):
    """exp of [[X, Yv - W], [Yv + W, -X]] (closed form, det-1)."""
    s = X * X + Yv * Yv - W * W
    nu = np.sqrt(np.abs(s))
    tiny = nu < 1e-6
    nu_safe = np.where(tiny, 1.0, nu)
    shc = np.where(
        tiny, 1.0 + s / 6.0,
        np.where(s >= 0, np.sinh(nu_safe), np.sin(nu_safe)) / nu_safe)
    ch = np.where(s >= 0, np.cosh(nu), np.cos(nu))
    out = np.empty((2, 2) + X.shape)
    out[0, 0] = ch + shc * X
    out[0, 1] = shc * (Yv - W)
    out[1, 0] = shc * (Yv + W)
    out[1, 1] = ch - shc * X
    return out


# ---------------------------------------------------------------------------
# small 2x2 batched algebra

def _matmul2(A, B):
    out = np.empty((2, 2) + A.shape[2:], dtype=np.result_type(A, B))
    for i in range(2):
        for j in range(2):
            out[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j]
    return out


def _matvec2(A, v):
    return np.stack([A[0, 0] * v[0] + A[0, 1] * v[1],
                     A[1, 0] * v[0] + A[1, 1] * v[1]])


def _inv2(A):
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    out = np.empty_like(A)
    out[0, 0] = A[1, 1] / det
    out[0, 1] = -A[0, 1] / det
    out[1, 0] = -A[1, 0] / det
    out[1, 1] = A[0, 0] / det
    return out


def _rot(th):
    c, s = np.cos(th), np.sin(th)
    out = np.empty((2, 2) + np.shape(th))
    out[0, 0] = c
    out[0, 1] = -s
    out[1, 0] = s
    out[1, 1] = c
    return out


# ---------------------------------------------------------------------------
# trajectories

@dataclass(frozen=True)
class ModeState:
    """A single mode's symmetrized state (z1, z2) and its forcing datum."""

    k: int
    eta: float
    z1: complex
    z2: complex
    xi_in: complex
    t: float = 0.0

    def __post_init__(self):
        if self.k == 0:
            raise DomainError("k = 0 modes are handled by the zeromode module")


def recover_physical(Z, t, k, eta, M):
    """Undo the symmetrization: (R_hat, A_hat) = (M p^{1/4} z1, p^{3/4} z2)."""
    u = np.asarray(eta, float) - np.asarray(k, float) * t
    p = np.asarray(k, float) ** 2 + u * u
    return M * p ** 0.25 * Z[0], p ** 0.75 * Z[1]


@dataclass
class BatchTrajectory:
    """Sampled evolution of a set of independent modes."""

    t: np.ndarray          # (T,)
    Z: np.ndarray          # (T, 2, n) complex
    Gamma: np.ndarray      # (T, 2, n) complex
    Y: np.ndarray          # (T, 2, 2, n) float, Y(t) ~ Phi_L(0, t)
    k: np.ndarray          # (n,)
    eta: np.ndarray        # (n,)
    mach: float

    @property
    def n_modes(self) -> int:
        return self.k.size

    def identity_residual(self) -> float:
        """max_t ||Z - Y^{-1} Gamma|| / ||Z|| over the trajectory."""
        worst = 0.0
        for i in range(self.t.size):
            rec = _matvec2(_inv2(self.Y[i]).astype(complex), self.Gamma[i])
            num = np.abs(rec - self.Z[i]).max()
            den = np.abs(self.Z[i]).max() + 1e-300
            worst = max(worst, num / den)
        return worst


def evolve_batch(k, eta, mach, Z_in, Xi_in, t_samples, tol=1e-8):
    """Advance all modes through the sample times with adaptive Magnus steps.

    k, eta: (n,) mode labels; Z_in: (2, n) complex; Xi_in: (n,) complex;
    t_samples: increasing times starting at >= 0. Local error per unit
    time is controlled to `tol` by step doubling.
    """
    kf = _check_mode_args(k, mach)
    eta = np.asarray(eta, dtype=float)
    M = float(mach)
    n = kf.size
    V = np.array(Z_in, dtype=complex).reshape(2, n).copy()
    Xi = np.asarray(Xi_in, dtype=complex).reshape(n)
    MV = np.zeros((2, 2, n), dtype=complex)
    MV[0, 0] = MV[1, 1] = 1.0
    Gam = V.copy()
    t_cur = np.zeros(n)

    a0, c0, _, p0 = _coeffs(kf, eta, M, 0.0)
    h = 0.25 / (1.0 + np.abs(a0) + np.sqrt(p0) / M + c0)
    cool = np.zeros(n, dtype=int)

    t_samples = np.asarray(t_samples, dtype=float)
    T = t_samples.size
    out_Z = np.empty((T, 2, n), complex)
    out_G = np.empty((T, 2, n), complex)
    out_Y = np.empty((T, 2, 2, n))

    for it, t_tgt in enumerate(t_samples):
        while True:
            idx = np.flatnonzero(t_cur < t_tgt - 1e-14 * (1.0 + t_tgt))
            if idx.size == 0:
                break
            _advance(kf, eta, M, V, MV, Gam, Xi, t_cur, h, idx, t_tgt, tol,
                     cool)
        th = phase_theta(t_tgt, kf, eta, M)
        rot = _rot(th)
        out_Z[it] = _matvec2(rot.astype(complex), V)
        out_G[it] = Gam
        out_Y[it] = _matmul2(_inv2(MV), _rot(-th)).real
    return BatchTrajectory(t=t_samples, Z=out_Z, Gamma=out_G, Y=out_Y,
                           k=kf, eta=eta, mach=M)


def _try_magnus(ks, es, M, t0, hh, V0, MV0, G0, Xis):
    """Magnus trial step with embedded halving; returns candidate state."""
    t1 = t0 + hh
    tm = t0 + 0.5 * hh
    th0 = phase_theta(t0, ks, es, M)
    thm = phase_theta(tm, ks, es, M)
    th1 = phase_theta(t1, ks, es, M)

    Pf, Pfh, dIf, epf, eff = _magnus_pieces(ks, es, M, t0, t1, th0, th1)
    P1, P1h, dI1, ep1, ef1 = _magnus_pieces(ks, es, M, t0, tm, th0, thm)
    P2, P2h, dI2, ep2, ef2 = _magnus_pieces(ks, es, M, tm, t1, thm, th1)

    V_full = _matvec2(Pf.astype(complex), V0) \
        + _matvec2(Pfh, dIf).astype(complex) * Xis
    V_mid = _matvec2(P1.astype(complex), V0) \
        + _matvec2(P1h, dI1).astype(complex) * Xis
    V_half = _matvec2(P2.astype(complex), V_mid) \
        + _matvec2(P2h, dI2).astype(complex) * Xis

    MV0_inv = _inv2(MV0)
    dG_full = _matvec2(_matmul2(MV0_inv, _inv2(Pfh).astype(complex)), dIf) \
        * Xis
    mid1 = _matmul2(P1h.astype(complex), MV0)
    mid2 = _matmul2(P2h.astype(complex), _matmul2(P1.astype(complex), MV0))
    dG_half = (_matvec2(_inv2(mid1), dI1.astype(complex))
               + _matvec2(_inv2(mid2), dI2.astype(complex))) * Xis

    MV_new = _matmul2(P2.astype(complex), _matmul2(P1.astype(complex), MV0))
    Vn = np.abs(V_half).max(axis=0)
    Gn = np.abs(G0 + dG_half).max(axis=0)
    mvn = np.abs(MV0).max(axis=(0, 1))
    scale = Vn + mvn * Gn + np.abs(Xis) + 1e-300
    err = (np.abs(V_full - V_half).max(axis=0)
           + mvn * np.abs(dG_full - dG_half).max(axis=0)
           + (ep1 + ep2) * (Vn + Gn)
           + (ef1 + ef2) * np.abs(Xis))
    return V_half, MV_new, dG_half, err, scale


def _dp_rhs(ks, es, M, Xis, t, y):
    """RHS of the envelope system for the joint (V, M_V, Gamma) state."""
    a, c, f2, p = _coeffs(ks, es, M, t)
    th = phase_theta(t, ks, es, M)
    ct, st = np.cos(th), np.sin(th)
    c2t = ct * ct - st * st
    s2t = 2.0 * st * ct
    x = -a * c2t + 0.5 * c * s2t
    yv = a * s2t + 0.5 * c * c2t
    w = 0.5 * c
    # Atilde = [[x, yv - w], [yv + w, -x]]
    f1, f2c = f2 * st * Xis, f2 * ct * Xis
    out = np.empty_like(y)
    out[0] = x * y[0] + (yv - w) * y[1] + f1
    out[1] = (yv + w) * y[0] - x * y[1] + f2c
    for j in (0, 1):  # columns of M_V
        out[2 + j] = x * y[2 + j] + (yv - w) * y[4 + j]
        out[4 + j] = (yv + w) * y[2 + j] - x * y[4 + j]
    det = y[2] * y[5] - y[3] * y[4]
    out[6] = (y[5] * f1 - y[3] * f2c) / det
    out[7] = (-y[4] * f1 + y[2] * f2c) / det
    return out


def _try_dp(ks, es, M, t0, hh, V0, MV0, G0, Xis):
    """Dormand-Prince 5(4) trial step on the joint envelope state."""
    y0 = np.concatenate([V0, MV0.reshape(4, -1), G0], axis=0)
    stages = []
    for i in range(7):
        yi = y0.copy()
        for j, aij in enumerate(_DP_A[i]):
            if aij != 0.0:
                yi = yi + (hh * aij) * stages[j]
        stages.append(_dp_rhs(ks, es, M, Xis, t0 + _DP_C[i] * hh, yi))
    y5 = y0.copy()
    dy = np.zeros_like(y0)
    for j in range(7):
        if _DP_B5[j] != 0.0:
            y5 = y5 + (hh * _DP_B5[j]) * stages[j]
        db = _DP_B5[j] - _DP_B4[j]
        if db != 0.0:
            dy = dy + (hh * db) * stages[j]
    err = np.abs(dy).max(axis=0)
    scale = np.abs(y5).max(axis=0) + np.abs(Xis) + 1e-300
    V_new = y5[0:2]
    MV_new = y5[2:6].reshape(2, 2, -1)
    dG = y5[6:8] - G0
    return V_new, MV_new, dG, err, scale


def _advance(kf, eta, M, V, MV, Gam, Xi, t_cur, h, idx, t_tgt, tol, cool):
    """One trial step for the active subset; branch by phase per step.

    Steps never cross a mode's critical time eta/k (the envelope
    coefficients peak there and the endpoint-based error proxies of the
    large-phase branch would miss it). Modes stuck in the small-step
    branch periodically attempt one Magnus leap across the whole
    remaining span; a failed leap starts a cooldown.
    """
    t0_all = t_cur[idx]
    room = t_tgt - t0_all
    tcrit = eta[idx] / kf[idx]
    before = t0_all < tcrit - 1e-12 * (1.0 + np.abs(tcrit))
    room = np.where(before, np.minimum(room, tcrit - t0_all), room)
    hh_all = np.minimum(h[idx], room)
    _, _, _, p0 = _coeffs(kf[idx], eta[idx], M, t0_all)
    rate = np.sqrt(p0) / M
    dp_mask = hh_all * rate <= _DP_SWITCH
    leap = dp_mask & (cool[idx] == 0) & (room * rate > 10.0 * _DP_SWITCH)
    hh_all = np.where(leap, room, hh_all)
    dp_mask &= ~leap
    cool[idx] = np.maximum(cool[idx] - 1, 0)
    for mask, order, step in ((dp_mask, 5, _try_dp),
                              (~dp_mask, 2, _try_magnus)):
        if not mask.any():
            continue
        sub = idx[mask]
        t0 = t0_all[mask]
        hh = hh_all[mask]
        V_new, MV_new, dG, err, scale = step(
            kf[sub], eta[sub], M, t0, hh, V[:, sub], MV[:, :, sub],
            Gam[:, sub], Xi[sub])
        budget = tol * hh * scale
        accept = err <= budget
        sub_leap = leap[mask]
        bad = ~accept & ~sub_leap & (hh < 1e-13 * (1.0 + t0))
        if bad.any():
            raise IntegrationFailureError(
                f"step underflow near t={t0[bad].min():.3g}")
        factor = 0.9 * (budget / (err + 1e-300)) ** (1.0 / (order + 1))
        factor = np.clip(factor, 0.2, 5.0)
        factor[~accept] = np.minimum(factor[~accept], 0.7)
        newh = hh * factor
        failed_leap = ~accept & sub_leap
        newh[failed_leap] = h[sub][failed_leap]
        h[sub] = newh
        cool_sub = cool[sub]
        cool_sub[failed_leap] = 40
        cool[sub] = cool_sub
        acc = sub[accept]
        sel = np.flatnonzero(accept)
        V[:, acc] = V_new[:, sel]
        MV[:, :, acc] = MV_new[:, :, sel]
        Gam[:, acc] += dG[:, sel]
        t_cur[acc] = (t0 + hh)[sel]


def evolve_mode(mode: ModeState, t_end, tol, method="magnus",
                t_samples=None, mach=1.0) -> BatchTrajectory:
    """Trajectory of (Z, Gamma, Y) for a single mode.

    method="magnus" uses the oscillatory envelope engine; method="rk"
    co-integrates dZ/dt = L Z + F Xi, dY/dt = -Y L, dGamma/dt = Y F Xi
    directly with an adaptive Runge-Kutta pair (reference path, modest
    t_end only). Both satisfy Z = Y^{-1} Gamma along the way.
    """
    if t_end <= mode.t:
        raise ValueError("t_end must exceed the initial time")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if mode.t != 0.0:
        raise NotImplementedError("trajectories start at t = 0")
    if t_samples is None:
        t_samples = np.linspace(0.0, t_end, 201)
    t_samples = np.asarray(t_samples, dtype=float)
    if method == "magnus":
        return evolve_batch([mode.k], [mode.eta], mach,
                            np.array([[mode.z1], [mode.z2]], complex),
                            [mode.xi_in], t_samples, tol=tol)
    if method == "rk":
        return _evolve_mode_rk(mode, t_samples, tol, mach=mach)
    raise ValueError(f"unknown method {method!r}")


def _evolve_mode_rk(mode: ModeState, t_samples, tol,
                    mach=1.0) -> BatchTrajectory:
    xi = complex(mode.xi_in)

    def rhs(t, y):
        L, F = assemble_L_F(t, mode.k, mode.eta, mach)
        Z = y[0:2] + 1j * y[2:4]
        Y = y[4:8].reshape(2, 2)
        dZ = L @ Z + F * xi
        dY = -Y @ L
        G = y[8:10] + 1j * y[10:12]
        dG = Y @ F * xi
        return np.concatenate([dZ.real, dZ.imag, dY.ravel(),
                               dG.real, dG.imag])

    z0 = np.array([mode.z1, mode.z2], complex)
    y0 = np.concatenate([z0.real, z0.imag, np.eye(2).ravel(),
                         z0.real, z0.imag])
    sol = solve_ivp(rhs, (0.0, float(t_samples[-1])), y0, method="RK45",
                    t_eval=t_samples, rtol=tol, atol=tol * 1e-3)
    if not sol.success:
        raise IntegrationFailureError(sol.message)
    T = t_samples.size
    Z = (sol.y[0:2] + 1j * sol.y[2:4]).T.reshape(T, 2, 1)
    Y = sol.y[4:8].T.reshape(T, 2, 2, 1)
    G = (sol.y[8:10] + 1j * sol.y[10:12]).T.reshape(T, 2, 1)
    return BatchTrajectory(t=np.asarray(t_samples, float), Z=Z, Gamma=G,
                           Y=Y, k=np.array([float(mode.k)]),
                           eta=np.array([mode.eta]), mach=mach)


# ---------------------------------------------------------------------------
# energy of the key scattering argument

def tilde_energy(V, t, k, eta, M):
    """Modified quadratic energy of the envelope and its coercive partner.

    With a = p'/(4p), b = sqrt(p)/M, c = 2Mk^2/p^{3/2}, zeta^2 = (b+c)/b
    and beta^2 = (b+c)b:
      E_tilde = zeta V1^2 + V2^2/zeta + 2 (a/beta) V1 V2,
      E       = zeta V1^2 + V2^2/zeta.
    Returns (E_tilde, E, |a|/beta); whenever |a|/beta < 1/2 the pair
    satisfies E/2 <= E_tilde <= 3E/2.
    """
    _check_mode_args(k, M)
    u = np.asarray(eta, float) - np.asarray(k, float) * t
    p = np.asarray(k, float) ** 2 + u * u
    a = -2.0 * np.asarray(k, float) * u / (4.0 * p)
    b = np.sqrt(p) / M
    c = 2.0 * M * np.asarray(k, float) ** 2 / p ** 1.5
    zeta = np.sqrt((b + c) / b)
    beta = np.sqrt((b + c) * b)
    V1, V2 = V[0], V[1]
    E = zeta * V1 ** 2 + V2 ** 2 / zeta
    E_tilde = E + 2.0 * (a / beta) * V1 * V2
    return E_tilde, E, np.abs(a) / beta


def angular_identity_residual(trajectory) -> dict:
    """Residual of r^2 dtheta/dt = V1 dV2/dt - dV1/dt V2 along a sampled
    real trajectory.

    trajectory: {"t": (n,), "V": (n, 2), "Vdot": (n, 2)}; theta-dot is
    estimated by central differences of the unwrapped polar angle, so the
    residual is O(dt^2). Samples with r = 0 are skipped (counted in the
    report). Note the closed-form angular rate is stated elsewhere with a
    cos theta coefficient whose derivation produces cos^2 theta; only the
    bilinear identity above is certified here.
    """
    t = np.asarray(trajectory["t"], float)
    V = np.asarray(trajectory["V"], float)
    Vd = np.asarray(trajectory["Vdot"], float)
    r2 = V[:, 0] ** 2 + V[:, 1] ** 2
    ok = r2 > 0
    theta = np.unwrap(np.arctan2(V[:, 1], V[:, 0]))
    thdot = np.gradient(theta, t)
    cross = V[:, 0] * Vd[:, 1] - Vd[:, 0] * V[:, 1]
    res = np.abs(r2 * thdot - cross)
    interior = np.zeros_like(ok)
    interior[1:-1] = True
    use = ok & interior
    return {
        "max_residual": float(res[use].max()) if use.any() else 0.0,
        "skipped_zero_radius": int((~ok).sum()),
    }


def dense_real_trajectory(k, eta, M, V_in, t_end, dt):
    """Densely sampled real unforced trajectory with RHS derivatives.

    Feeds angular_identity_residual; integrates dV/dt = L V at high
    accuracy and reports V and L V on a uniform grid.
    """
    ts = np.arange(0.0, t_end + 0.5 * dt, dt)

    def rhs(t, y):
        L, _ = assemble_L_F(t, k, eta, M)
        return L @ y

    sol = solve_ivp(rhs, (0.0, ts[-1]), np.asarray(V_in, float),
                    t_eval=ts, rtol=1e-11, atol=1e-13)
    if not sol.success:
        raise IntegrationFailureError(sol.message)
    V = sol.y.T
    Vd = np.empty_like(V)
    for i, t in enumerate(ts):
        L, _ = assemble_L_F(t, k, eta, M)
        Vd[i] = L @ V[i]
    return {"t": ts, "V": V, "Vdot": Vd}


# ---------------------------------------------------------------------------
# lower-bound data construction

def perturb_data_lwdensity(modes, eps, mach=1.0, t_max=400.0, tol=1e-8):
    """Shift initial data so the Duhamel integrand stays away from zero.

    modes: sequence of (k, eta, Z_in (2,), Xi_in) with real engineered
    data; eps: perturbation size. Per mode, the trajectory of Gamma is
    sampled, its limit detected, a unit vector nu maximizing the minimal
    angle to the tangents at near-zero times is selected, and the
    physical data (alpha, rho, omega) are shifted so that Z_in gains
    eps*exp(-(k^2+eta^2))*nu while Xi_in is untouched.

    Returns a list of per-mode records with the shifted data and the
    certified floor (eps/2)*exp(-(k^2+eta^2)).
    """
    modes = list(modes)
    if not modes:
        raise ValueError("no modes given")
    kf = np.array([m[0] for m in modes], float)
    eta = np.array([m[1] for m in modes], float)
    Z_in = np.array([m[2] for m in modes], float).T  # (2, n)
    Xi_in = np.array([m[3] for m in modes], float)
    n = kf.size

    # sample times: dense early (zeros live at t = O(|eta/k| + 1)),
    # doubling pairs late (limit detection)
    t_dense = np.linspace(0.0, 40.0, 401)
    t_geo = t_max * 2.0 ** (-np.arange(10, -1, -1.0))
    ts = np.unique(np.concatenate([t_dense, t_geo]))
    traj = evolve_batch(kf, eta, mach, Z_in.astype(complex), Xi_in, ts,
                        tol=tol)
    G = traj.Gamma.real  # engineered data is real, so Gamma is real
    lam = kf * kf + eta * eta
    env = np.exp(-lam)

    i_half = int(np.argmin(np.abs(ts - 0.5 * t_max)))
    G_inf = G[-1]                      # (2, n)
    conv = np.abs(G[-1] - G[i_half]).max(axis=0)
    scale = np.abs(G).max(axis=(0, 1)) + np.abs(Xi_in) + 1e-300

    records = []
    angles = np.deg2rad(np.arange(360.0))
    cand = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (360, 2)
    for j in range(n):
        g = G[:, :, j].copy()           # (T, 2)
        g_inf = G_inf[:, j].copy()
        shift1 = 0.0
        if np.hypot(*g_inf) < eps * env[j]:
            # limit too close to zero: pre-shift the divergence datum so
            # the limit magnitude is at least eps*env
            s = 1.0 if g_inf[1] >= 0 else -1.0
            shift1 = s * eps * env[j]
            g[:, 1] += shift1
            g_inf = g_inf + np.array([0.0, shift1])
        # tangent directions at times where |Gamma| dips below eps*env
        rad = np.hypot(g[:, 0], g[:, 1])
        low = np.flatnonzero(rad < eps * env[j])
        tangents = []
        for i in low:
            Yi = traj.Y[i, :, :, j]
            _, F = assemble_L_F(ts[i], int(kf[j]), eta[j], mach)
            tau = Yi @ F * Xi_in[j]
            norm = np.hypot(*tau)
            if norm > 0:
                tangents.append(tau / norm)
        if tangents:
            tau = np.array(tangents)    # (m, 2)
            crossmag = np.abs(cand[:, 0, None] * tau[None, :, 1]
                              - cand[:, 1, None] * tau[None, :, 0])
            score = crossmag.min(axis=1)
        else:
            score = np.ones(cand.shape[0])
        best = score.max()
        if best < np.sin(np.deg2rad(0.5)):
            raise ConstructionFailureError(
                f"no transversal direction for mode (k={int(kf[j])}, "
                f"eta={eta[j]:g})")
        good = np.flatnonzero(score >= 0.8 * best)
        # among near-optimal candidates keep the one with the largest
        # sampled floor of |Gamma + eps env nu|
        shifted = g[None, :, :] + eps * env[j] * cand[good][:, None, :]
        floors = np.hypot(shifted[:, :, 0], shifted[:, :, 1]).min(axis=1)
        nu = cand[good[int(np.argmax(floors))]]

        # physical data of the unperturbed mode at t = 0
        rho0 = mach * lam[j] ** 0.25 * Z_in[0, j]
        alpha0 = lam[j] ** 0.75 * Z_in[1, j]
        omega0 = Xi_in[j] - rho0
        d_rho = eps * mach * lam[j] ** 0.25 * env[j] * nu[0]
        d_alpha = lam[j] ** 0.75 * (eps * env[j] * nu[1] + shift1)
        records.append({
            "k": int(kf[j]),
            "eta": float(eta[j]),
            "nu": nu,
            "pre_shift": float(shift1),
            "gamma_inf": g_inf,
            "converged": bool(conv[j] <= 1e-8 * scale[j]),
            "rho_in": float(rho0 + d_rho),
            "alpha_in": float(alpha0 + d_alpha),
            "omega_in": float(omega0 - d_rho),
            "Z_in": np.array([Z_in[0, j] + eps * env[j] * nu[0],
                              Z_in[1, j] + eps * env[j] * nu[1] + shift1]),
            "xi_in": float(Xi_in[j]),
            "floor": 0.5 * eps * env[j],
        })
    return records


def lower_bound_ratio(traj: BatchTrajectory, mode_weights):
    """Series of (||Q||^2 + M^-2 ||rho||^2) / (<t> ||Gamma||^2_{-1/2}).

    mode_weights: per-mode quadrature weights (delta_eta, doubled for
    conjugate pairs). The numerator uses sqrt(p)|Z|^2 per mode; the
    denominator weights |Gamma|^2 by <eta>^{-1}. Times with a vanishing
    denominator are dropped.
    """
    w = np.asarray(mode_weights, float)
    if not np.any(w > 0):
        raise ValueError("all mode weights vanish")
    kf, eta, M = traj.k, traj.eta, traj.mach
    num = np.empty(traj.t.size)
    den = np.empty(traj.t.size)
    brac = bracket(eta)
    for i, t in enumerate(traj.t):
        u = eta - kf * t
        p = kf * kf + u * u
        num[i] = np.sum(w * np.sqrt(p)
                        * np.sum(np.abs(traj.Z[i]) ** 2, axis=0))
        den[i] = bracket(t) * np.sum(
            w / brac * np.sum(np.abs(traj.Gamma[i]) ** 2, axis=0))
    keep = den > 0
    if not keep.any():
        raise ValueError("Duhamel data vanished identically")
    return traj.t[keep], num[keep] / den[keep]
