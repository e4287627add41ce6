"""Tests for figure rendering over synthetic CSV/JSON artifacts."""

import json
import os

import numpy as np
import pytest

from figfab.cli import main
from figfab.render import FigureSpec, load_csv, render


def _write_csv(path, columns):
    names = list(columns)
    rows = len(next(iter(columns.values())))
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for j in range(rows):
            fh.write(",".join("%.17g" % columns[nm][j] for nm in names)
                     + "\n")


@pytest.fixture
def couette_artifacts(tmp_path):
    t = np.concatenate([[0.0], np.geomspace(0.5, 200.0, 80)])
    tp = np.where(t > 0, t, 1.0)
    cols = {
        "t": t,
        "q_energy": 2.0 * np.sqrt(1 + t ** 2),
        "rho_norm": 0.5 / np.sqrt(tp),
        "p1_norm": 3.0 * tp ** -0.5,
        "p2_norm": 1.7 * tp ** -1.5,
        "gamma_norm": np.full(t.size, 0.9),
    }
    csv = str(tmp_path / "couette.csv")
    _write_csv(csv, cols)
    summary = {
        "config": {"mach": 1.0},
        "rates": {
            "acoustic": {"exponent": 0.998877665544332211},
            "p1": {"exponent": -0.5012},
            "p2": {"exponent": -1.4987},
        },
    }
    jsn = str(tmp_path / "couette.json")
    with open(jsn, "w") as fh:
        json.dump(summary, fh)
    return csv, jsn, summary


@pytest.fixture
def mode_csv(tmp_path):
    t = np.linspace(0.0, 50.0, 120)
    z1 = 0.8 * np.cos(t) + 0.1
    z2 = 0.8 * np.sin(t)
    cols = {
        "t": t,
        "z1_re": z1, "z1_im": np.zeros_like(t),
        "z2_re": z2, "z2_im": np.zeros_like(t),
        "gamma1_re": 0.4 + 0.1 * np.exp(-t), "gamma1_im": 0 * t,
        "gamma2_re": 0.3 - 0.05 * np.exp(-t), "gamma2_im": 0 * t,
    }
    path = str(tmp_path / "couette_mode.csv")
    _write_csv(path, cols)
    return path


class TestLoadCsv:
    def test_round_trip(self, couette_artifacts):
        csv, _, _ = couette_artifacts
        cols = load_csv(csv)
        assert set(cols) == {"t", "q_energy", "rho_norm", "p1_norm",
                             "p2_norm", "gamma_norm"}
        assert cols["t"].size == 81

    def test_empty_csv_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ValueError, match="empty"):
            load_csv(str(path))

    def test_header_only_rejected(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("t,v\n")
        with pytest.raises(ValueError):
            load_csv(str(path))


class TestRates:
    def test_annotation_matches_json_exactly(self, couette_artifacts,
                                             tmp_path):
        csv, jsn, summary = couette_artifacts
        out = str(tmp_path / "rates.png")
        info = render(FigureSpec(kind="rates", csv_path=csv,
                                 json_path=jsn, out_path=out))
        assert os.path.exists(out)
        for nm in ("acoustic", "p1", "p2"):
            assert info["slopes"][nm] == summary["rates"][nm]["exponent"]

    def test_missing_column_lists_available(self, tmp_path):
        path = str(tmp_path / "bad.csv")
        _write_csv(path, {"t": [1.0, 2.0], "x": [1.0, 2.0]})
        with pytest.raises(ValueError, match="available: t, x"):
            render(FigureSpec(kind="rates", csv_path=path,
                              json_path=path, out_path="unused.png"))

    def test_requires_json(self, couette_artifacts, tmp_path):
        csv, _, _ = couette_artifacts
        with pytest.raises(ValueError, match="json"):
            render(FigureSpec(kind="rates", csv_path=csv,
                              out_path=str(tmp_path / "x.png")))


class TestPhase:
    def test_annulus_positive_inner_radius(self, mode_csv, tmp_path):
        out = str(tmp_path / "phase.png")
        info = render(FigureSpec(kind="phase", csv_path=mode_csv,
                                 out_path=out))
        r_min, r_max = info["annulus"]
        assert os.path.exists(out)
        assert 0.0 < r_min <= r_max
        assert r_max <= 1.0


class TestGamma:
    def test_renders(self, mode_csv, tmp_path):
        out = str(tmp_path / "gamma.png")
        info = render(FigureSpec(kind="gamma", csv_path=mode_csv,
                                 out_path=out))
        assert os.path.exists(out)
        assert info["gamma_min"] > 0


class TestEnergy:
    def test_renders(self, tmp_path):
        t = np.linspace(0.0, 20.0, 40)
        path = str(tmp_path / "shear.csv")
        _write_csv(path, {"t": t, "E_s": 5.0 * np.exp(-0.1 * t),
                          "R_term": 2.0 * np.exp(-0.1 * t)})
        out = str(tmp_path / "energy.png")
        info = render(FigureSpec(kind="energy", csv_path=path,
                                 out_path=out))
        assert os.path.exists(out)
        assert set(info["drawn"]) == {"E_s", "R_term"}


class TestIdempotence:
    def test_rerun_same_output(self, mode_csv, tmp_path):
        out = str(tmp_path / "phase.png")
        a = render(FigureSpec(kind="phase", csv_path=mode_csv,
                              out_path=out))
        b = render(FigureSpec(kind="phase", csv_path=mode_csv,
                              out_path=out))
        assert a == b


class TestCli:
    def test_ok(self, mode_csv, tmp_path):
        out = str(tmp_path / "g.png")
        assert main(["gamma", "--csv", mode_csv, "--out", out]) == 0
        assert os.path.exists(out)

    def test_bad_kind(self, mode_csv, tmp_path):
        with pytest.raises(SystemExit):
            main(["spiral", "--csv", mode_csv,
                  "--out", str(tmp_path / "x.png")])

    def test_missing_file(self, tmp_path):
        code = main(["gamma", "--csv", str(tmp_path / "absent.csv"),
                     "--out", str(tmp_path / "x.png")])
        assert code == 2

    def test_unknown_kind_spec(self):
        with pytest.raises(ValueError):
            FigureSpec(kind="sunset", csv_path="x", out_path="y")
