import json

import numpy as np
import pytest

from gammalab.experiments import (
    CSV_COLUMNS,
    ConfigError,
    EpsEntry,
    GammaSpec,
    PotentialSpec,
    RunRecord,
    SweepConfig,
    _fit_tail,
    _record,
    run_boundary_terms_study,
    run_bulk_study,
    run_wall_study,
    emit_report,
    run_eps_sweep,
    run_gamma_study,
    run_property_suite,
    run_sigma_table,
)
from gammalab.potentials import DoubleWell

ZERO_PHI = {
    "W": {"wells": [-1.0, 1.0]},
    "V": {"wells": [-1.0, 1.0]},
    "eps": [1e-3, 5e-4],
    "pair": {"kind": "config", "interface": None, "bulk_value": -1.0, "boundary": []},
    "gamma": {"R": 2.0, "spacing": 0.5, "value": 2.0},
    "max_cells": 32,
}


def test_config_validation():
    with pytest.raises(ConfigError):
        SweepConfig(p=3.1)
    with pytest.raises(ConfigError):
        SweepConfig(eps=[1e-3, 1e-3])
    with pytest.raises(ConfigError):
        SweepConfig(eps=[1e-3, -1e-4])
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({"colour": "red"})
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({"W": {"wells": [0, 1], "depth": 2}})
    assert SweepConfig(p=2.0, cross_check=True).p == 2.0
    cfg = SweepConfig.from_dict({"p": 2.5, "W": {"wells": [-1, 1]}})
    assert len(cfg.eps) == 8 and cfg.eps == sorted(cfg.eps, reverse=True)


def test_grid_rule():
    cfg = SweepConfig()
    assert cfg.spacing_for(1e-4) == 1 / 256
    assert cfg.spacing_for(2e-3) == 1 / 64
    assert cfg.spacing_for(0.5) == 1 / 32
    assert SweepConfig(max_cells=128).spacing_for(1e-6) == 1 / 128


def test_config_round_trip():
    cfg = SweepConfig.from_dict(ZERO_PHI)
    again = SweepConfig.from_dict(json.loads(json.dumps(cfg.to_json())))
    assert again.to_json() == cfg.to_json()


def test_sigma_table():
    rows, ok = run_sigma_table([2.0, 2.5], DoubleWell(-1.0, 1.0))
    assert ok
    assert rows[0]["c_p"] == 2.0
    assert rows[0]["sigma_p"] == pytest.approx(8 / 3, abs=1e-12)
    assert rows[0]["profile_energy"] == pytest.approx(8 / 3, abs=1e-6)
    assert abs(rows[1]["profile_energy"] - rows[1]["sigma_p"]) <= 1e-6
    assert run_sigma_table([], DoubleWell(-1.0, 1.0)) == ([], True)


def test_gamma_study_column_and_single_cell():
    V = DoubleWell(-1.0, 1.0)
    from gammalab.profiles import GammaOptions

    study = run_gamma_study(V, 2.5, [2.0], [0.25, 0.125], opts=GammaOptions(starts=("polar",)))
    assert len(study.cells) == 2 and study.columns_monotone == {"2.0": True}
    one = run_gamma_study(V, 2.5, [2.0], [0.25], opts=GammaOptions(starts=("polar",)))
    assert one.cells[0]["estimate"] == study.cells[0]["estimate"]


def test_tail_fit_on_exact_geometric_tail():
    R = np.array([8.0, 16.0, 32.0, 64.0])
    fit = _fit_tail(R, 4.0 - 3.0 / R)
    assert fit["slope"] == pytest.approx(-1.0, abs=1e-12)
    assert fit["extrapolated"] == pytest.approx(4.0, abs=1e-12)
    assert _fit_tail([8.0, 16.0], [1.0, 1.1])["slope"] is None


def test_zero_phi_sweep_has_zero_energies(tmp_path):
    rec = run_eps_sweep(SweepConfig.from_dict(ZERO_PHI))
    assert rec.phi["total"] == 0.0
    for e in rec.entries:
        assert e.status == "ok"
        assert e.recovery["total"] == 0.0 and e.minimized["total"] == 0.0
    emit_report(rec, tmp_path)
    rows = (tmp_path / "minimized.csv").read_text().splitlines()
    assert rows[0] == ",".join(CSV_COLUMNS) and len(rows) == 3


def _fake_record(n):
    entries = [
        EpsEntry(eps=1e-3 / (k + 1), spacing=1 / 32, r=0.1, rho=0.05, status="ok", message="", iterations=3,
                 recovery={"grad": 1.0, "bulk": 2.0, "boundary": 3.0, "total": 6.0},
                 minimized={"grad": 0.5, "bulk": 1.0, "boundary": 1.5, "total": 3.0},
                 regions={"A1": 1.0})
        for k in range(n)
    ]
    return RunRecord({"p": 2.5}, {"total": 4.0}, entries)


def test_report_empty_and_one_row(tmp_path):
    emit_report(_fake_record(0), tmp_path / "a")
    assert (tmp_path / "a" / "minimized.csv").read_text() == ",".join(CSV_COLUMNS) + "\n"
    emit_report(_fake_record(1), tmp_path / "b")
    lines = (tmp_path / "b" / "minimized.csv").read_text().splitlines()
    assert len(lines) == 2
    row = dict(zip(CSV_COLUMNS, lines[1].split(",")))
    assert float(row["ratio"]) == 3.0 / 4.0 and row["status"] == "ok"


def test_record_json_round_trip_and_determinism(tmp_path):
    rec = _fake_record(3)
    emit_report(rec, tmp_path / "a")
    emit_report(rec, tmp_path / "b")
    for name in ("minimized.csv", "recovery.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    back = RunRecord.from_json(json.loads((tmp_path / "a" / "summary.json").read_text()))
    assert back.to_json() == rec.to_json()
    with pytest.raises(ValueError):
        RunRecord.from_json({"schema": "other"})


def test_report_surfaces_path_on_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        emit_report(_fake_record(1), blocker / "sub")


def test_property_suite_small_and_vacuous():
    assert run_property_suite(42, ()).passed
    rep = run_property_suite(42, (8,), n_fields=5, n_scaling=3, n_slicing=2, slicing_nodes=8)
    assert rep.passed and rep.first_counterexample() is None
    assert {c.name for c in rep.checks} == {"truncation", "young_bound", "rearrangement", "scaling", "slicing"}


def test_counterexample_is_serialized():
    res = _record("demo", [1.0, -0.5, -2.0], [np.zeros(2), np.ones(2), np.full(2, 7.0)])
    assert res.violations == 2 and res.worst == 2.0
    assert res.reproducer == {"index": 2, "values": [7.0, 7.0]}


def test_potential_spec_builds():
    assert PotentialSpec((0.0, 2.0), 0.5).build() == DoubleWell(0.0, 2.0, 0.5)
    assert GammaSpec().tail_R[0] == 8.0


def test_bulk_study_reports_ratio_per_eps():
    rows = run_bulk_study(SweepConfig(eps=[1e-3, 1e-4], max_cells=64))
    assert [r["eps"] for r in rows] == [1e-3, 1e-4]
    assert all(r["reference"] == pytest.approx(2.4781282146962510542) for r in rows)
    assert all(0.9 < r["ratio"] < 1.3 for r in rows)


def test_wall_study_without_mismatch_is_free():
    W = DoubleWell(-1.0, 1.0)
    rows = run_wall_study(2.5, W, [1e-6], cells=32, bulk_value=1.0, boundary_value=1.0)
    assert rows[0]["G"] == 0.0 and rows[0]["reference"] == 0.0


def test_boundary_terms_study_slopes_with_polar_psi():
    from gammalab.geometry import HalfPlaneGrid
    from gammalab.profiles import polar_extension

    psi = polar_extension(-1.0, 1.0, HalfPlaneGrid(12.0, 12.0, 0.5))
    out = run_boundary_terms_study(DoubleWell(-1.0, 1.0, 0.25), 2.5, [1e-3, 1e-4, 1e-5, 1e-6], psi=psi)
    assert out["slopes"]["bulk_bound"] == pytest.approx(1 / 3, rel=1e-9)
    assert set(out["slopes"]) == {"ubar_annulus", "cutoff_bound", "bulk_bound"}
    with pytest.raises(ValueError, match="box"):
        run_boundary_terms_study(DoubleWell(-1.0, 1.0, 0.25), 2.5, [1e-9], psi=psi)
