import csv
import io
import json
import subprocess
import sys

import pytest

from gausstorsion.cli import main


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def test_halfspace_json(capsys):
    assert main(["halfspace", "--measure", "0.5", "--beta", "1"]) == 0
    out = _json_out(capsys)
    assert out["lambda"] == pytest.approx(0.0, abs=1e-15)
    assert out["T_halfspace"] == pytest.approx(0.97323065893772278, rel=1e-12)
    assert out["isoperimetric_identity_residual"] <= 1e-10


def test_halfspace_csv_and_profile(capsys, tmp_path):
    assert main(["halfspace", "--lambda", "0.3", "--format", "csv"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0][0] == "lambda" and float(rows[1][0]) == 0.3
    p = tmp_path / "v.csv"
    assert main(["halfspace", "--lambda", "0", "--profile", "--points", "11", "--output",
                 str(p)]) == 0
    lines = p.read_text().splitlines()
    assert lines[0] == "x1,v" and len(lines) == 12


def test_domain_info(capsys):
    spec = json.dumps({"kind": "disk", "target_measure": 0.5})
    assert main(["domain", "info", spec]) == 0
    out = _json_out(capsys)
    assert out["measure"] == pytest.approx(0.5, abs=1e-10)
    assert out["isoperimetric_margin"] > 0


def test_solve_and_profile(capsys, tmp_path):
    spec = tmp_path / "sq.json"
    spec.write_text(json.dumps({"kind": "square", "target_measure": 0.5}))
    field = tmp_path / "u.npz"
    dump = tmp_path / "u.csv"
    assert main(["solve", str(spec), "--beta", "1", "--h", "0.1", "--save-field", str(field),
                 "--dump-field", str(dump)]) == 0
    out = _json_out(capsys)
    for key in ("measure", "lambda_star", "T_domain", "T_halfspace", "u_min",
                "boundary_identity_residual", "cg_iters"):
        assert key in out
    assert out["T_domain"] < out["T_halfspace"]
    assert dump.read_text().startswith("x,y,u\n")
    prof = tmp_path / "prof.csv"
    assert main(["profile", str(field), "--levels", "40", "--output", str(prof)]) == 0
    assert prof.read_text().splitlines()[0] == "t,mu,perim,ext_integral"


def test_verify(capsys):
    assert main(["verify", "--family", "half_plane", "--measure", "0.5", "--h", "0.16", "0.08",
                 "0.04"]) == 0
    assert _json_out(capsys)["passed"] is True


def test_sweep_outputs(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"measures": [0.5], "betas": [1.0], "families": ["square"],
                               "mesh_sizes": [0.16, 0.08, 0.04]}))
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(cfg), "--output", str(out)]) == 0
    assert (out / "report.json").exists() and (out / "report.csv").exists()
    assert (out / "plot-data" / "plot_square.csv").exists()
    assert "PASS" in capsys.readouterr().err


def test_gauss_table(capsys):
    assert main(["gauss-table", "--n", "5"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["lambda", "h", "I", "R", "F", "Psi"] and len(rows) == 6


def test_error_exit_codes(capsys, tmp_path):
    assert main(["domain", "info", json.dumps({"kind": "ellipse", "target_measure": 0.5})]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["halfspace", "--measure", "1.5"]) == 2
    assert main(["profile", str(tmp_path / "missing.npz")]) == 2
    with pytest.raises(SystemExit):
        main(["solve"])


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "gausstorsion", "halfspace", "--lambda", "1"],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0
    assert json.loads(r.stdout)["measure"] == pytest.approx(0.15865525393145705, rel=1e-14)
