import csv
import io
import json

import pytest

from gausstorsion.errors import DomainError
from gausstorsion.halfspace import HalfSpaceProblem, halfspace_torsion
from gausstorsion.sweep import (CSV_COLUMNS, FLAGS, ReportIOError, SweepConfig,
                                VerificationReport, load_report, plot_data, report_csv,
                                report_emit, report_json, run_sweep, verify_tuple, worker_count)

SMALL = dict(measures=(0.5, 0.3), betas=(1.0,), families=("half_plane", "square"),
             mesh_sizes=(0.16, 0.08, 0.04), n_levels=80)


@pytest.fixture(scope="module")
def report():
    return run_sweep(SweepConfig(**SMALL), workers=1)


def test_rows_and_flags(report):
    assert len(report.rows) == 4
    for r in report.rows:
        assert r["passed"], r["failure"]
        assert r["failure"] == ""
        for name in FLAGS:
            assert r[f"ok_{name}"] is True
    assert report.passed


def test_equality_and_strict_cases(report):
    by = {(r["family"], r["target_measure"]): r for r in report.rows}
    hp = by["half_plane", 0.5]
    assert abs(hp["comparison_margin"]) <= hp["T_error_bar"]
    sq = by["square", 0.5]
    assert sq["comparison_margin"] > sq["T_error_bar"]


def test_rotated_half_plane_matches_unrotated():
    row = verify_tuple("rotated_half_plane", 0.3, 1.0, (0.16, 0.08, 0.04))
    T = halfspace_torsion(HalfSpaceProblem.from_measure(0.3, 1.0))
    assert row["passed"]
    assert row["T_domain"] == pytest.approx(T, rel=0.01)


def test_determinism_across_workers(report):
    again = run_sweep(SweepConfig(**SMALL), workers=2)
    assert again.content_hash() == report.content_hash()
    a, b = report.to_dict(), again.to_dict()
    a.pop("generated_at"), b.pop("generated_at")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_json_roundtrip(tmp_path, report):
    p = tmp_path / "r.json"
    report_emit(report, "json", p)
    back = load_report(p)
    assert back.rows == report.rows and back.config == report.config
    assert back.content_hash() == report.content_hash()
    assert report_json(back) == p.read_text()


def test_csv_columns(report):
    rows = list(csv.reader(io.StringIO(report_csv(report))))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert all(len(r) == len(CSV_COLUMNS) for r in rows)
    assert len(rows) == 1 + len(report.rows)


def test_plot_data_sorted(tmp_path, report):
    data = plot_data(report)
    assert set(data) == {"half_plane", "square"}
    for text in data.values():
        rows = list(csv.reader(io.StringIO(text)))[1:]
        s = [float(r[0]) for r in rows]
        assert s == sorted(s)
    written = report_emit(report, "plot-data", tmp_path / "plots")
    assert sorted(p.name for p in written) == ["plot_half_plane.csv", "plot_square.csv"]


def test_emit_errors(tmp_path, report):
    with pytest.raises(ReportIOError) as info:
        report_emit(report, "json", tmp_path / "missing" / "r.json")
    assert "missing" in str(info.value)
    with pytest.raises(DomainError):
        report_emit(report, "xml", tmp_path / "r.xml")
    with pytest.raises(ReportIOError):
        load_report(tmp_path / "nope.json")


def test_failure_is_recorded():
    # a square cannot reach this measure inside the bracket; setup fails, the sweep continues
    rep = run_sweep(SweepConfig(measures=(0.999999999999,), betas=(1.0, 2.0),
                                families=("square",), mesh_sizes=(0.16, 0.08, 0.04)), workers=1)
    assert not rep.passed
    assert all(not r["passed"] and r["failure"] for r in rep.rows)


def test_config_validation(tmp_path):
    with pytest.raises(DomainError):
        SweepConfig(measures=(1.2,))
    with pytest.raises(DomainError):
        SweepConfig(betas=(0.0,))
    with pytest.raises(DomainError):
        SweepConfig(families=("ellipse",))
    with pytest.raises(DomainError):
        SweepConfig(mesh_sizes=(0.02, 0.04, 0.08))
    cfg = SweepConfig(**SMALL)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert SweepConfig.from_json(p) == cfg
    assert SweepConfig().measures == (0.2, 0.5, 0.8)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("GT_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("GT_THREADS", "zero")
    with pytest.raises(DomainError):
        worker_count()
    monkeypatch.delenv("GT_THREADS")
    assert worker_count() >= 1


def test_report_from_dict_ignores_hash(report):
    d = json.loads(report_json(report))
    assert VerificationReport.from_dict(d).content_hash() == d["content_hash"]
