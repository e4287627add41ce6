"""Figure rendering from CSV time-series and JSON summaries.

Strictly read-only over the artifacts: every number drawn or annotated
is taken verbatim from the CSV columns or the JSON summary; nothing is
re-simulated here. Reruns over the same inputs are idempotent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("rates", "phase", "gamma", "energy")


@dataclass(frozen=True)
class FigureSpec:
    """One render request: inputs, kind and output path."""

    kind: str
    csv_path: str
    out_path: str
    json_path: str = None
    logx: bool = True
    logy: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(
                f"unknown figure kind {self.kind!r}; "
                f"choose one of {', '.join(KINDS)}")


def load_csv(path: str) -> dict:
    """Read a comma-delimited table into named float columns."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: CSV is empty")
    names = lines[0].split(",")
    if len(lines) == 1:
        raise ValueError(f"{path}: CSV has a header but no rows")
    data = np.array([[float(v) for v in ln.split(",")]
                     for ln in lines[1:]])
    if data.shape[1] != len(names):
        raise ValueError(f"{path}: ragged CSV rows")
    return {nm: data[:, j] for j, nm in enumerate(names)}


def _require(cols: dict, names, path: str):
    missing = [nm for nm in names if nm not in cols]
    if missing:
        raise ValueError(
            f"{path}: missing columns {', '.join(missing)}; "
            f"available: {', '.join(cols)}")


def _load_json(spec: FigureSpec) -> dict:
    if spec.json_path is None:
        raise ValueError(f"{spec.kind} figure requires --json")
    with open(spec.json_path) as fh:
        return json.load(fh)


def _slope_guide(ax, t, value, exponent, label):
    """Reference power law through the last sample of the series."""
    sel = t > 0
    ts = t[sel]
    anchor = value[sel][-1]
    guide = anchor * (ts / ts[-1]) ** exponent
    ax.plot(ts, guide, "k--", lw=0.8,
            label=f"{label}: slope {exponent:.17g}")


def _render_rates(spec: FigureSpec) -> dict:
    cols = load_csv(spec.csv_path)
    _require(cols, ("t", "q_energy", "rho_norm", "p1_norm", "p2_norm"),
             spec.csv_path)
    summary = _load_json(spec)
    rates = summary.get("rates", {})
    mach = float(summary["config"]["mach"])
    t = cols["t"]
    acoustic = cols["q_energy"] + cols["rho_norm"] ** 2 / mach ** 2

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    series = {"acoustic": acoustic, "p1": cols["p1_norm"],
              "p2": cols["p2_norm"]}
    slopes = {}
    for nm, vals in series.items():
        sel = (t > 0) & (vals > 0)
        ax.plot(t[sel], vals[sel], lw=1.2, label=nm)
        if nm in rates and "exponent" in rates[nm]:
            slopes[nm] = rates[nm]["exponent"]
            _slope_guide(ax, t[sel], vals[sel], slopes[nm], nm)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    ax.set_title("growth / decay rates")
    ax.legend(fontsize=7)
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)
    return {"slopes": slopes, "out": spec.out_path}


def _render_phase(spec: FigureSpec) -> dict:
    cols = load_csv(spec.csv_path)
    _require(cols, ("t", "z1_re", "z1_im", "z2_re", "z2_im"),
             spec.csv_path)
    z1 = cols["z1_re"] + 1j * cols["z1_im"]
    z2 = cols["z2_re"] + 1j * cols["z2_im"]
    radius = np.sqrt(np.abs(z1) ** 2 + np.abs(z2) ** 2)
    r_min, r_max = float(radius.min()), float(radius.max())

    fig, ax = plt.subplots(figsize=(4.8, 4.8))
    ax.plot(cols["z1_re"], cols["z2_re"], lw=0.7)
    th = np.linspace(0.0, 2.0 * np.pi, 256)
    for r, style in ((r_min, "g--"), (r_max, "r--")):
        ax.plot(r * np.cos(th), r * np.sin(th), style, lw=0.9)
    ax.set_aspect("equal")
    ax.set_xlabel("Re Z1")
    ax.set_ylabel("Re Z2")
    ax.set_title(f"phase portrait, annulus [{r_min:.3g}, {r_max:.3g}]")
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)
    return {"annulus": (r_min, r_max), "out": spec.out_path}


def _render_gamma(spec: FigureSpec) -> dict:
    cols = load_csv(spec.csv_path)
    _require(cols, ("t", "gamma1_re", "gamma1_im", "gamma2_re",
                    "gamma2_im"), spec.csv_path)
    g1 = cols["gamma1_re"] + 1j * cols["gamma1_im"]
    g2 = cols["gamma2_re"] + 1j * cols["gamma2_im"]
    mag = np.sqrt(np.abs(g1) ** 2 + np.abs(g2) ** 2)

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(cols["t"], cols["gamma1_re"], lw=1.0, label="Re Gamma1")
    ax.plot(cols["t"], cols["gamma2_re"], lw=1.0, label="Re Gamma2")
    ax.plot(cols["t"], mag, "k-", lw=1.2, label="|Gamma|")
    ax.set_xlabel("t")
    ax.set_ylabel("Gamma")
    ax.set_title("Duhamel integrand components")
    ax.legend(fontsize=7)
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)
    return {"gamma_min": float(mag.min()), "out": spec.out_path}


def _render_energy(spec: FigureSpec) -> dict:
    cols = load_csv(spec.csv_path)
    _require(cols, ("t", "E_s"), spec.csv_path)
    t = cols["t"]
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    drawn = []
    for nm in cols:
        if nm == "t" or not nm.endswith(("E_s", "_term")):
            continue
        vals = cols[nm]
        sel = vals > 0
        if np.any(sel):
            ax.plot(t[sel], vals[sel], lw=1.0, label=nm)
            drawn.append(nm)
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.set_title("energy functional and terms")
    ax.legend(fontsize=7)
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)
    return {"drawn": drawn, "out": spec.out_path}


_RENDERERS = {
    "rates": _render_rates,
    "phase": _render_phase,
    "gamma": _render_gamma,
    "energy": _render_energy,
}


def render(spec: FigureSpec) -> dict:
    """Render one figure; returns the annotation values actually drawn."""
    return _RENDERERS[spec.kind](spec)
