"""Standalone evolutions of the two building blocks and the toy model.

Each block isolates one mechanism of the full near-Couette system:

  block1: d/dt f = Conv(b) dX Delta_t^{-1} f, monitored by the weighted
          norm ||z^{-1} f||_{H^s} (non-increasing);
  block2: d/dt f = g^2 [d/dt Delta_L] Delta_t^{-1} f, monitored by
          ||m^{-1} w^{-1} f||_{H^s} (non-increasing) and the implied
          growth certificate ||Delta_L^{-(1+eps_tilde)} f||_{H^s};
  toy:    d/dt r = -a, d/dt a = g^2 [d/dt Delta_L] Delta_t^{-1} a
          - Delta_L r, monitored by the functional
          ||v~^{-1} r||^2 + ||w~^{-1} a||^2 with w~ = w m and
          v~^{-2} = w~^{-2} (-Delta_L).

All monitors are sampled at integrator accept-steps only; the k = 0 row
must be empty (it belongs to the zeromode module).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationFailureError
from .grids import FrequencyGrid, SpectralField, _check_no_zero_mode, bracket
from .operators import ProfileSpectrum, apply_delta_t_inv, dt_delta_L
from .weights import WeightParams, m_eval, w_eval, z_eval


@dataclass
class BlockRun:
    """One block evolution with its accept-step monitor series."""

    kind: str
    t: np.ndarray
    monitors: dict
    final: object
    info: dict


def _sobolev_weights(grid: FrequencyGrid, s: float) -> np.ndarray:
    wk = bracket(grid.k_values) ** (2.0 * s)
    we = bracket(grid.eta) ** (2.0 * s)
    return wk[:, None] * we[None, :]


def _weighted_norm(grid, sob, extra, values) -> float:
    """sqrt( delta_eta * sum sob * extra * |values|^2 )."""
    return float(np.sqrt(grid.delta_eta
                         * np.sum(sob * extra * np.abs(values) ** 2)))


def _integrate(rhs_rows, f0: SpectralField, t_end, tol):
    """Advance a full SpectralField with a per-(k-row) right-hand side.

    rhs_rows(t, values) must return d/dt values (k = 0 row zero).
    Returns (accept_times, list of value arrays).
    """
    grid = f0.grid
    shape = f0.values.shape

    def rhs(t, y):
        vals = y.view(complex).reshape(shape)
        return rhs_rows(t, vals).ravel().view(float)

    sol = solve_ivp(rhs, (0.0, float(t_end)),
                    f0.values.astype(complex).ravel().view(float),
                    method="RK45", rtol=tol, atol=tol)
    if not sol.success:
        raise IntegrationFailureError(sol.message)
    frames = [sol.y[:, j].copy().view(complex).reshape(shape)
              for j in range(sol.t.size)]
    return sol.t.copy(), frames


def _per_row(grid, profile, action):
    """Lift a per-k slice action into a full-array right-hand side."""
    def rhs_rows(t, vals):
        out = np.zeros_like(vals)
        for k in grid.k_values:
            if k == 0:
                continue
            i = grid.k_index(k)
            out[i] = action(t, int(k), vals[i])
        return out
    return rhs_rows


def block1_evolve(f_in: SpectralField, profile: ProfileSpectrum,
                  t_end: float, s: float, tol: float = 1e-8) -> BlockRun:
    """Evolve d/dt f = Conv(b) dX Delta_t^{-1} f.

    Monitors ``f_norm`` = ||f||_{H^s} and ``zf_norm`` = ||z^{-1} f||_{H^s}
    (the proof quantity; non-increasing). info reports the sup of
    ||f||/||f_in||.
    """
    _check_no_zero_mode(f_in)
    grid = f_in.grid
    Cb = profile.conv_matrix("b", grid)

    def action(t, k, row):
        return Cb @ (1j * k * apply_delta_t_inv(t, k, profile, grid, row))

    ts, frames = _integrate(_per_row(grid, profile, action), f_in, t_end, tol)
    sob = _sobolev_weights(grid, s)
    kk = grid.k_values[:, None].astype(float)
    eta = grid.eta[None, :]
    f_norm = np.empty(ts.size)
    zf_norm = np.empty(ts.size)
    mask = kk != 0
    k_safe = np.where(mask, kk, 1.0)
    for j, (t, vals) in enumerate(zip(ts, frames)):
        z2 = np.where(mask, z_eval(t, k_safe, eta) ** 2, 0.0)
        f_norm[j] = _weighted_norm(grid, sob, 1.0, vals)
        zf_norm[j] = _weighted_norm(grid, sob, z2, vals)
    f_in_norm = f_norm[0]
    return BlockRun(
        kind="block1", t=ts,
        monitors={"f_norm": f_norm, "zf_norm": zf_norm},
        final=SpectralField(grid, frames[-1]),
        info={"sup_ratio": float(np.max(f_norm) / f_in_norm)
              if f_in_norm > 0 else 0.0},
    )


def block2_closed_form(f_in: SpectralField, t: float,
                       c: float) -> SpectralField:
    """Couette solution f_hat(t) = (p(t)/p(0))^c f_hat(0), per mode."""
    _check_no_zero_mode(f_in)
    grid = f_in.grid
    kk = grid.k_values[:, None].astype(float)
    eta = grid.eta[None, :]
    lam = kk * kk + eta * eta
    p = kk * kk + (eta - kk * t) ** 2
    ratio = np.where(kk != 0, p / np.where(lam == 0, 1.0, lam), 1.0)
    return SpectralField(grid, f_in.values * ratio ** c)


def block2_evolve(f_in: SpectralField, profile: ProfileSpectrum,
                  t_end: float, s: float, eps_tilde: float = 0.0,
                  c: float = 1.0, tol: float = 1e-8) -> BlockRun:
    """Evolve d/dt f = c g^2 [d/dt Delta_L] Delta_t^{-1} f.

    Monitors ``mwf_norm`` = ||m^{-1} w^{-1} f||_{H^s} (non-increasing,
    weights with rate-loss exponent eps_tilde and the plain m of this
    block, i.e. N = 1) and ``deltaL_norm`` = ||Delta_L^{-(1+eps_tilde)}
    f||_{H^s}. At the Couette profile the run doubles as its own oracle
    (kind ``block2_couette_oracle``) and records the relative error
    against the closed form (p(t)/p(0))^c.
    """
    _check_no_zero_mode(f_in)
    grid = f_in.grid
    params = WeightParams(eps_tilde=eps_tilde, big_n=1.0)
    Mg2 = np.eye(grid.n_eta) + profile.conv_matrix("g2m1", grid)

    def action(t, k, row):
        core = dt_delta_L(t, k, grid) \
            * apply_delta_t_inv(t, k, profile, grid, row)
        return c * (Mg2 @ core)

    ts, frames = _integrate(_per_row(grid, profile, action), f_in, t_end, tol)
    sob = _sobolev_weights(grid, s)
    kk = grid.k_values[:, None].astype(float)
    eta = grid.eta[None, :]
    mask = kk != 0
    k_safe = np.where(mask, kk, 1.0)
    mwf = np.empty(ts.size)
    dl = np.empty(ts.size)
    oracle_err = np.empty(ts.size)
    for j, (t, vals) in enumerate(zip(ts, frames)):
        mw = np.where(
            mask,
            (m_eval(t, k_safe, eta, params)
             / w_eval(t, k_safe, eta, params)) ** 2, 0.0)
        mwf[j] = _weighted_norm(grid, sob, mw, vals)
        p = kk * kk + (eta - kk * t) ** 2
        pw = np.where(mask, p ** (-2.0 * (1.0 + eps_tilde)), 0.0)
        dl[j] = _weighted_norm(grid, sob, pw, vals)
        if profile.is_couette:
            ref = block2_closed_form(f_in, float(t), c).values
            scale = np.max(np.abs(ref)) or 1.0
            oracle_err[j] = float(np.max(np.abs(vals - ref)) / scale)
    f_in_norm = _weighted_norm(grid, sob, 1.0, f_in.values)
    info = {"deltaL_bound_constant": float(np.max(dl) / f_in_norm)
            if f_in_norm > 0 else 0.0,
            "eps_tilde": eps_tilde, "c": c}
    monitors = {"mwf_norm": mwf, "deltaL_norm": dl}
    kind = "block2"
    if profile.is_couette:
        kind = "block2_couette_oracle"
        monitors["oracle_rel_err"] = oracle_err
        info["oracle_max_rel_err"] = float(np.max(oracle_err))
    return BlockRun(kind=kind, t=ts, monitors=monitors,
                    final=SpectralField(grid, frames[-1]), info=info)


def toy_evolve(r_in: SpectralField, a_in: SpectralField,
               profile: ProfileSpectrum, t_end: float, s: float,
               params: WeightParams = None,
               tol: float = 1e-8) -> BlockRun:
    """Evolve the toy system d/dt r = -a, d/dt a = g^2 [d/dt Delta_L]
    Delta_t^{-1} a - Delta_L r.

    Monitors the toy functional ||v~^{-1} r||^2 + ||w~^{-1} a||^2 with
    w~ = w m (the full-strength weights, N = 32 by default) and
    v~^{-2} = w~^{-2} (-Delta_L); asserts nothing itself but reports the
    functional-implied squared-norm growth exponent 2 + eps_tilde next
    to the 1 + eps_tilde of the optimized functional.
    """
    _check_no_zero_mode(r_in)
    _check_no_zero_mode(a_in)
    if r_in.grid != a_in.grid:
        raise ValueError("r and a must share one grid")
    grid = r_in.grid
    params = params or WeightParams()
    Mg2 = np.eye(grid.n_eta) + profile.conv_matrix("g2m1", grid)
    kk = grid.k_values[:, None].astype(float)
    eta_row = grid.eta[None, :]

    pair0 = np.stack([r_in.values, a_in.values])

    def rhs(t, y):
        vals = y.view(complex).reshape(pair0.shape)
        out = np.zeros_like(vals)
        for k in grid.k_values:
            if k == 0:
                continue
            i = grid.k_index(k)
            r, a = vals[0, i], vals[1, i]
            p = float(k) ** 2 + (grid.eta - float(k) * t) ** 2
            out[0, i] = -a
            out[1, i] = Mg2 @ (dt_delta_L(t, k, grid)
                               * apply_delta_t_inv(t, k, profile, grid, a)) \
                + p * r
        return out.ravel().view(float)

    sol = solve_ivp(rhs, (0.0, float(t_end)), pair0.ravel().view(float),
                    method="RK45", rtol=tol, atol=tol)
    if not sol.success:
        raise IntegrationFailureError(sol.message)
    ts = sol.t.copy()
    sob = _sobolev_weights(grid, s)
    mask = kk != 0
    k_safe = np.where(mask, kk, 1.0)
    func = np.empty(ts.size)
    r_l2 = np.empty(ts.size)
    for j in range(ts.size):
        vals = sol.y[:, j].copy().view(complex).reshape(pair0.shape)
        t = ts[j]
        wt_inv2 = np.where(
            mask,
            (m_eval(t, k_safe, eta_row, params)
             / w_eval(t, k_safe, eta_row, params)) ** 2, 0.0)
        p = kk * kk + (eta_row - kk * t) ** 2
        func[j] = grid.delta_eta * float(
            np.sum(sob * wt_inv2 * (p * np.abs(vals[0]) ** 2
                                    + np.abs(vals[1]) ** 2)))
        r_l2[j] = _weighted_norm(grid, np.ones_like(sob), 1.0, vals[0])
    final_vals = sol.y[:, -1].copy().view(complex).reshape(pair0.shape)
    return BlockRun(
        kind="toy", t=ts,
        monitors={"toy_functional": func, "r_l2": r_l2},
        final=(SpectralField(grid, final_vals[0]),
               SpectralField(grid, final_vals[1])),
        info={"toy_sq_exponent": 2.0 + params.eps_tilde,
              "optimal_sq_exponent": 1.0 + params.eps_tilde},
    )


def monotone_within(series: np.ndarray, rel_tol: float = 1e-8) -> bool:
    """Whether a monitor never increases by more than rel_tol per step."""
    series = np.asarray(series, dtype=float)
    scale = np.maximum(series[:-1], 1e-300)
    return bool(np.all(np.diff(series) <= rel_tol * scale))
