"""Full near-Couette evolution in (R, A, Xi) with the weighted energy.

The evolved unknowns per nonzero x-wavenumber k are the density-like
variable R, the divergence-like variable A and the auxiliary combination
Xi = Omega + g R. The module provides the right-hand side assembly, the
adaptive full evolution with accept-step energy reports, the vorticity
reconstruction through the transport operator Phi_b (with a secondary
literal functional-relation route on small grids), and the rate fits for
the theorem-level bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    ContractionFailureError,
    DomainError,
    IntegrationFailureError,
    OperatorPositivityError,
)
from .grids import (
    FlowState,
    FrequencyGrid,
    SpectralField,
    _check_no_zero_mode,
    bracket,
    moving_frame_norms,
)
from .operators import (
    ProfileSpectrum,
    G_matrix,
    build_delta_t,
    dt_delta_L,
    dtG_matrix,
    PhiPair,
    t2_tilde_norm,
)
from .weights import (
    WeightParams,
    dtm_over_m,
    dtw_over_w,
    h_eval,
    m_eval,
    w_eval,
)


@dataclass
class EnergyReport:
    """The energy functional and its term breakdown at one time."""

    t: float
    E_s: float
    terms: dict


@dataclass
class ShearRun:
    """Accept-step trajectory of the full (R, A, Xi) evolution."""

    grid: FrequencyGrid
    mach: float
    t: np.ndarray
    R: np.ndarray          # (n_t, 2*k_max+1, n_eta)
    A: np.ndarray
    Xi: np.ndarray
    reports: list
    norms: dict
    omega_tilde: np.ndarray = None
    phi_tilde: dict = None  # k -> (n_t, n_eta, n_eta)
    q_int: np.ndarray = None
    info: dict = None

    def state_at(self, j: int) -> FlowState:
        mk = lambda v: SpectralField(self.grid, v.copy())
        return FlowState(R=mk(self.R[j]), A=mk(self.A[j]), W=mk(self.Xi[j]),
                         t=float(self.t[j]), mach=self.mach, w_kind="xi")


def _active_k(grid: FrequencyGrid):
    return [int(k) for k in grid.k_values if k != 0]


def _fast_ops(t, k, profile, grid):
    """(Delta_t, Delta_t^{-1}) by direct inversion.

    The certified Neumann path in the operators module re-checks the
    contraction norm (an SVD) on every call; inside the integrator hot
    loop the contraction is certified once up front instead.
    """
    delta_t = build_delta_t(t, k, profile, grid).entries
    return delta_t, np.linalg.inv(delta_t)


def _require_xi(state: FlowState):
    if state.w_kind != "xi":
        raise DomainError("shear-sim requires W flagged as 'xi'")
    for f in (state.R, state.A, state.W):
        _check_no_zero_mode(f)


def make_state(R_in: SpectralField, A_in: SpectralField,
               Omega_in: SpectralField, profile: ProfileSpectrum,
               mach: float = 1.0) -> FlowState:
    """Build the evolved state with Xi_in = Omega_in + g R_in."""
    grid = R_in.grid
    Mg = profile.g_matrix(grid)
    xi = Omega_in.values.copy()
    for k in _active_k(grid):
        i = grid.k_index(k)
        xi[i] += Mg @ R_in.values[i]
    return FlowState(R=R_in.copy(), A=A_in.copy(),
                     W=SpectralField(grid, xi), t=0.0, mach=mach,
                     w_kind="xi")


def assemble_rhs(state: FlowState, profile: ProfileSpectrum, t: float):
    """Time derivative (dR, dA, dXi) of the near-Couette system.

    dR  = -A
    dA  = g^2 [d/dt Delta_L] Delta_t^{-1} A
          + (-Delta_t / M^2 + 2 g dXX Delta_t^{-1} g) R
          - 2 g dXX Delta_t^{-1} Xi
    dXi = b g (dY - t dX) Delta_t^{-1} A - b dX Delta_t^{-1} g R
          + b dX Delta_t^{-1} Xi
    """
    _require_xi(state)
    grid = state.R.grid
    M2 = state.mach ** 2
    Mg = profile.g_matrix(grid).astype(complex)
    Mg2 = np.eye(grid.n_eta) + profile.conv_matrix("g2m1", grid)
    Cb = profile.conv_matrix("b", grid)
    dR = np.zeros_like(state.R.values)
    dA = np.zeros_like(dR)
    dXi = np.zeros_like(dR)
    for k in _active_k(grid):
        i = grid.k_index(k)
        R, A, Xi = state.R.values[i], state.A.values[i], state.W.values[i]
        u = grid.eta - k * t
        delta_t, inv = _fast_ops(t, k, profile, grid)
        dxx_inv = -float(k) ** 2 * inv
        dR[i] = -A
        dA[i] = Mg2 @ (dt_delta_L(t, k, grid) * (inv @ A)) \
            - (delta_t @ R) / M2 \
            + 2.0 * Mg @ (dxx_inv @ (Mg @ R)) \
            - 2.0 * Mg @ (dxx_inv @ Xi)
        dxinv = 1j * float(k) * inv
        dXi[i] = Cb @ (Mg @ ((1j * u) * (inv @ A))) \
            - Cb @ (dxinv @ (Mg @ R)) \
            + Cb @ (dxinv @ Xi)
    mk = lambda v: SpectralField(grid, v)
    return mk(dR), mk(dA), mk(dXi)


def _weight_tables(grid, t, params):
    """Diagonal weight multipliers over the (k, eta) plane (k=0 zeroed)."""
    kk = grid.k_values[:, None].astype(float)
    eta = grid.eta[None, :]
    mask = kk != 0
    ks = np.where(mask, kk, 1.0)
    m2 = np.where(mask, m_eval(t, ks, eta, params) ** 2, 0.0)
    w = w_eval(t, ks, eta, params)
    h2 = np.where(mask, h_eval(t, ks, eta, params) ** 2, 0.0)
    dtw = np.where(mask, dtw_over_w(t, ks, eta, params), 0.0)
    dtm = np.where(mask, dtm_over_m(t, ks, eta, params), 0.0)
    return mask, m2, w, h2, dtw, dtm


def energy_Es(state: FlowState, profile: ProfileSpectrum, t: float,
              params: WeightParams, s: float) -> EnergyReport:
    """Evaluate the weighted energy functional and its term ledger.

    E_s = (R_term + A_term + Xi_term)/2 + cross_term with
    R_term = Re< m^{-2} w^{-2(1-c)} (-Delta_t) R, R >_s / M^2 (the
    symmetrized quadratic form; positivity enforced), A/Xi terms the
    squared m^{-1} w^{-(1-c)}-weighted H^s norms, cross = <h R/M, h A>_s.
    The five N-terms feed the dissipation ledger.
    """
    _require_xi(state)
    grid = state.R.grid
    c = params.c_exp
    sob = (bracket(grid.k_values)[:, None]
           * bracket(grid.eta)[None, :]) ** (2.0 * s)
    mask, m2, w, h2, dtw, dtm = _weight_tables(grid, t, params)
    wc = np.where(mask, w ** (-2.0 * (1.0 - c)), 0.0)
    w2 = np.where(mask, w ** (-2.0), 0.0)
    Rm = state.R.values / state.mach
    A = state.A.values
    Xi = state.W.values

    # (-Delta_t) R per active k
    mdt_R = np.zeros_like(Rm)
    for k in _active_k(grid):
        i = grid.k_index(k)
        mdt_R[i] = -(build_delta_t(t, k, profile, grid).entries @ Rm[i])

    de = grid.delta_eta
    quad = lambda wt, f, g: float(de * np.sum(sob * wt
                                              * np.real(np.conj(f) * g)))
    R_term = quad(m2 * wc, Rm, mdt_R)
    if R_term < 0.0:
        raise OperatorPositivityError(
            f"R-form is negative ({R_term:.3e}); profile too large")
    A_term = quad(m2 * wc, A, A)
    Xi_term = quad(m2 * wc, Xi, Xi)
    cross_term = float(de * np.sum(sob * h2 * np.real(np.conj(Rm) * A)))
    terms = {
        "R_term": R_term,
        "A_term": A_term,
        "Xi_term": Xi_term,
        "cross_term": cross_term,
        "N_A_w": quad(dtw * m2 * wc, A, A),
        "N_A_m": quad(dtm * m2 * wc, A, A),
        "N_R_m": quad(dtm * m2 * w2, Rm, mdt_R),
        "N_Xi_w": (1.0 - c) * quad(dtw * m2 * wc, Xi, Xi),
        "N_Xi_m": quad(dtm * m2 * wc, Xi, Xi),
    }
    E = 0.5 * (R_term + A_term + Xi_term) + cross_term
    return EnergyReport(t=float(t), E_s=E, terms=terms)


def evolve_full(state_in: FlowState, profile: ProfileSpectrum,
                t_end: float, s: float = 2.0,
                params: WeightParams = None, tol: float = 1e-8,
                reconstruct: bool = True,
                secondary: bool = False) -> ShearRun:
    """Adaptive evolution with accept-step energy reports and norms.

    When reconstruct is set, Omega-tilde (d/dt Omega~ = [g + b G] A) and
    the transport companion Phi~ are co-integrated per k so the
    functional relation can be certified afterwards; secondary
    additionally accumulates q = int (d/dtau G) R dtau for the literal
    route (small grids only).
    """
    _require_xi(state_in)
    if secondary and not reconstruct:
        raise ValueError("secondary route requires reconstruct=True")
    grid = state_in.R.grid
    params = params or WeightParams(mach=state_in.mach)
    n = grid.n_eta
    ks = _active_k(grid)
    Mg = profile.g_matrix(grid).astype(complex)
    Cb = profile.conv_matrix("b", grid)
    for k in ks:  # one-time contraction certificate for the fast inverses
        for tc in (0.0, float(t_end)):
            nrm = t2_tilde_norm(tc, k, profile, grid)
            if nrm >= 1.0:
                raise ContractionFailureError(
                    f"||T2_tilde|| = {nrm:.3f} >= 1 at t={tc}, k={k}")

    # complex state layout per active k:
    #   R(n), A(n), Xi(n), [Omega~(n)], [Phi~(n^2)], [q(n)]
    blocks = 3 + (1 if reconstruct else 0)
    per_k = blocks * n + (n * n if reconstruct else 0) \
        + (n if secondary else 0)

    y0_parts = []
    for k in ks:
        i = grid.k_index(k)
        part = [state_in.R.values[i], state_in.A.values[i],
                state_in.W.values[i]]
        if reconstruct:
            omega_in = state_in.W.values[i] - Mg @ state_in.R.values[i]
            part.append(omega_in.astype(complex))          # Omega~(0)
            part.append(np.zeros(n * n, complex))          # Phi~(0)
        if secondary:
            part.append(np.zeros(n, complex))              # q(0)
        y0_parts.append(np.concatenate(part))
    y0 = np.concatenate(y0_parts)

    M2 = state_in.mach ** 2
    Mg2 = np.eye(n) + profile.conv_matrix("g2m1", grid)

    def rhs(t, y):
        z = y.view(complex)
        out = np.zeros_like(z)
        for jk, k in enumerate(ks):
            off = jk * per_k
            R = z[off:off + n]
            A = z[off + n:off + 2 * n]
            Xi = z[off + 2 * n:off + 3 * n]
            u = grid.eta - k * t
            delta_t, inv = _fast_ops(t, k, profile, grid)
            dxx_inv = -float(k) ** 2 * inv
            dxinv = 1j * float(k) * inv
            invA = inv @ A
            out[off:off + n] = -A
            out[off + n:off + 2 * n] = \
                Mg2 @ (dt_delta_L(t, k, grid) * invA) \
                - (delta_t @ R) / M2 \
                + 2.0 * Mg @ (dxx_inv @ (Mg @ R)) \
                - 2.0 * Mg @ (dxx_inv @ Xi)
            out[off + 2 * n:off + 3 * n] = \
                Cb @ (Mg @ ((1j * u) * invA)) \
                - Cb @ (dxinv @ (Mg @ R)) + Cb @ (dxinv @ Xi)
            pos = off + 3 * n
            if reconstruct:
                phi_t = z[pos + n:pos + n + n * n].reshape(n, n)
                Gm = Mg @ ((1j * u)[:, None] * inv)
                Gm = Gm + phi_t @ (Mg + Cb @ Gm)
                out[pos:pos + n] = Mg @ A + Cb @ (Gm @ A)   # [g + bG] A
                Ab = Cb @ dxinv
                dphi = -dxinv - phi_t @ Ab
                out[pos + n:pos + n + n * n] = dphi.ravel()
                pos += n + n * n
            if secondary:
                pair = PhiPair(t=t, phi_b=None, phi_tilde=phi_t)
                out[pos:pos + n] = dtG_matrix(t, k, profile, grid, pair) @ R
        return out.view(float)

    sol = solve_ivp(rhs, (0.0, float(t_end)), y0.view(float),
                    method="DOP853", rtol=tol, atol=tol)
    if not sol.success:
        raise IntegrationFailureError(sol.message)

    ts = sol.t.copy()
    nt = ts.size
    shape = (nt, 2 * grid.k_max + 1, n)
    R = np.zeros(shape, complex)
    A = np.zeros(shape, complex)
    Xi = np.zeros(shape, complex)
    om = np.zeros(shape, complex) if reconstruct else None
    phi = {k: np.zeros((nt, n, n), complex) for k in ks} \
        if reconstruct else None
    q = np.zeros(shape, complex) if secondary else None
    for j in range(nt):
        z = sol.y[:, j].copy().view(complex)
        for jk, k in enumerate(ks):
            off = jk * per_k
            i = grid.k_index(k)
            R[j, i] = z[off:off + n]
            A[j, i] = z[off + n:off + 2 * n]
            Xi[j, i] = z[off + 2 * n:off + 3 * n]
            pos = off + 3 * n
            if reconstruct:
                om[j, i] = z[pos:pos + n]
                phi[k][j] = z[pos + n:pos + n + n * n].reshape(n, n)
                pos += n + n * n
            if secondary:
                q[j, i] = z[pos:pos + n]

    run = ShearRun(grid=grid, mach=state_in.mach, t=ts, R=R, A=A, Xi=Xi,
                   reports=[], norms={}, omega_tilde=om, phi_tilde=phi,
                   q_int=q, info={"s": s, "params": params})
    names = ("q_energy", "rho_norm", "p1_norm", "p2_norm")
    series = {nm: np.empty(nt) for nm in names}
    xi_dev = np.empty(nt)
    for j in range(nt):
        st = run.state_at(j)
        run.reports.append(energy_Es(st, profile, float(ts[j]), params, s))
        nr = moving_frame_norms(st, profile)
        for nm in names:
            series[nm][j] = nr[nm]
        xi_dev[j] = np.sqrt(grid.delta_eta
                            * np.sum(np.abs(Xi[j] - Xi[0]) ** 2))
    series["xi_deviation"] = xi_dev
    run.norms = series
    return run


def reconstruct_omega(run: ShearRun, profile: ProfileSpectrum) -> dict:
    """Certify the Omega-from-R functional relation along a run.

    Primary route: Omega_rec = Phi_b Omega~ from the co-integrated
    transport pair; residual = ||Omega_evolved - Omega_rec|| /
    ||Omega_evolved|| with Omega_evolved = Xi - g R. Secondary route
    (when q was accumulated): the literal relation with G, G_in and the
    integral of (d/dt G) R.
    """
    if run.omega_tilde is None:
        raise ValueError("run was made without reconstruction state")
    grid = run.grid
    n = grid.n_eta
    Mg = profile.g_matrix(grid).astype(complex)
    Cb = profile.conv_matrix("b", grid)
    nt = run.t.size
    res_primary = np.zeros(nt)
    res_secondary = np.zeros(nt) if run.q_int is not None else None
    omega_rec = np.zeros_like(run.omega_tilde)
    G0 = {}
    for k in _active_k(grid):
        G0[k] = G_matrix(0.0, k, profile, grid, np.zeros((n, n), complex))
    for j in range(nt):
        t = float(run.t[j])
        num = den = 0.0
        num2 = 0.0
        for k in _active_k(grid):
            i = grid.k_index(k)
            phi_t = run.phi_tilde[k][j]
            inv_phib = np.eye(n) + Cb @ phi_t
            rec = np.linalg.solve(inv_phib, run.omega_tilde[j, i])
            omega_rec[j, i] = rec
            evolved = run.Xi[j, i] - Mg @ run.R[j, i]
            num += float(np.sum(np.abs(evolved - rec) ** 2))
            den += float(np.sum(np.abs(evolved) ** 2))
            if res_secondary is not None:
                Gt = G_matrix(t, k, profile, grid, phi_t)
                omega_in = run.Xi[0, i] - Mg @ run.R[0, i]
                bracket_v = omega_in \
                    + (Mg + Cb @ G0[k]) @ run.R[0, i] \
                    - (Mg + Cb @ Gt) @ run.R[j, i] \
                    + Cb @ run.q_int[j, i]
                rec2 = np.linalg.solve(inv_phib, bracket_v)
                num2 += float(np.sum(np.abs(evolved - rec2) ** 2))
        scale = np.sqrt(den) or 1.0
        res_primary[j] = np.sqrt(num) / scale
        if res_secondary is not None:
            res_secondary[j] = np.sqrt(num2) / scale
    out = {"t": run.t, "omega_rec": omega_rec,
           "residual_primary": res_primary}
    if res_secondary is not None:
        out["residual_secondary"] = res_secondary
        out["route_agreement"] = float(np.max(np.abs(
            res_secondary - res_primary)))
    return out


def fit_exponent(t: np.ndarray, series: np.ndarray,
                 t_min: float = 5.0) -> float:
    """Least-squares slope of log(series) vs log<t> on t >= t_min."""
    t = np.asarray(t, float)
    series = np.asarray(series, float)
    sel = (t >= t_min) & (series > 0)
    if np.count_nonzero(sel) < 10:
        raise ValueError("insufficient fit window (need >= 10 samples)")
    x = np.log(bracket(t[sel]))
    if x.max() - x.min() < 0.3:
        raise ValueError("insufficient fit window (time span too short)")
    return float(np.polyfit(x, np.log(series[sel]), 1)[0])


def theorem_checks(run: ShearRun, eps_tilde: float,
                   t_min: float = 5.0, slack: float = 0.05) -> dict:
    """Fit the theorem-level growth/decay exponents of a run.

    acoustic = ||Q||^2 + M^{-2} ||rho||^2 (target exponent
    <= 1 + eps_tilde + slack); p1_norm decay toward -1/2; p2_norm
    toward -3/2 (windows widened by eps_tilde + slack).
    """
    acoustic = run.norms["q_energy"] \
        + run.norms["rho_norm"] ** 2 / run.mach ** 2
    out = {}
    out["acoustic_exponent"] = fit_exponent(run.t, acoustic, t_min)
    out["acoustic_pass"] = bool(
        out["acoustic_exponent"] <= 1.0 + eps_tilde + slack)
    out["p1_exponent"] = fit_exponent(run.t, run.norms["p1_norm"], t_min)
    out["p1_pass"] = bool(
        out["p1_exponent"] >= -0.5 - eps_tilde - slack)
    out["p2_exponent"] = fit_exponent(run.t, run.norms["p2_norm"], t_min)
    out["p2_pass"] = bool(
        abs(out["p2_exponent"] + 1.5) <= 0.25 + eps_tilde + slack)
    out["all_pass"] = bool(out["acoustic_pass"] and out["p1_pass"]
                           and out["p2_pass"])
    return out


def coercivity_ok(report: EnergyReport) -> bool:
    """E_s >= (R+A+Xi)/10 via |cross| <= (4/5) sqrt(R_term A_term)."""
    tm = report.terms
    total = tm["R_term"] + tm["A_term"] + tm["Xi_term"]
    bound = 0.8 * np.sqrt(tm["R_term"] * tm["A_term"])
    return bool(abs(tm["cross_term"]) <= bound * (1 + 1e-9) + 1e-300
                and report.E_s >= 0.1 * total - 1e-12)
