import csv
import json
import math
import subprocess
import sys

import pytest

from driftrack import cli
from driftrack import expr as ex
from driftrack.geometry import frame_to_dict, normal_form_frame

FAST = {"a0": "1", "alpha": "2", "z_f": 1, "T": 2}
SLOW = {"a0": "2-z", "alpha": "1", "z_f": 1, "T": 0.3}
CANON = {"a": 1, "kappa": 1, "alpha1_tilde": 4}


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def _run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_fast(tmp_path, capsys):
    code, out, _ = _run(["analyze", _write(tmp_path, "p.json", FAST), "--out", str(tmp_path)], capsys)
    assert code == 0
    assert out.splitlines()[0] == "regime=DriftFast constant=1.0"
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["regime"] == "DriftFast" and rep["constant"] == 1.0


def test_analyze_slow_reports_omega(tmp_path, capsys):
    code, out, _ = _run(["--out", str(tmp_path), "analyze", _write(tmp_path, "p.json", SLOW)], capsys)
    assert code == 0
    assert "regime=DriftSlow" in out and "H_inf=" in out and "Omega=" in out


def test_analyze_flat_ratio_is_degenerate(tmp_path, capsys):
    flat = {"a0": "1", "alpha": "1", "z_f": 1, "T": 0.5}
    code, _, err = _run(["analyze", _write(tmp_path, "p.json", flat), "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_DEGENERATE and "degenerate" in err


@pytest.mark.parametrize("data", [{"a0": "1", "z_f": 1, "T": 1}, {"a0": "1", "alpha": "(", "z_f": 1, "T": 1}])
def test_analyze_schema_errors(tmp_path, capsys, data):
    code, _, err = _run(["analyze", _write(tmp_path, "p.json", data)], capsys)
    assert code == cli.EXIT_USAGE and err


def test_analyze_missing_file(tmp_path, capsys):
    assert _run(["analyze", str(tmp_path / "nope.json")], capsys)[0] == cli.EXIT_USAGE


def test_quiet_suppresses_stdout(tmp_path, capsys):
    code, out, _ = _run(["analyze", _write(tmp_path, "p.json", FAST), "--quiet", "--out", str(tmp_path)],
                        capsys)
    assert code == 0 and out == ""


def test_tol_override_selects_exact_branch(tmp_path, capsys):
    near = {"a0": "1", "alpha": "1", "b": "1", "z_f": 1, "T": 1.0001}
    path = _write(tmp_path, "p.json", near)
    assert "regime=DriftFast" in _run(["analyze", path, "--out", str(tmp_path)], capsys)[1]
    out = _run(["analyze", path, "--tol", "1e-3", "--out", str(tmp_path)], capsys)[1]
    assert "regime=DriftExact" in out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_oracle_fast_ratio(tmp_path, capsys):
    path = _write(tmp_path, "p.json", FAST)
    code, _, _ = _run(["oracle", path, "--eps", "1", "--grid", "512x512", "--out", str(tmp_path)], capsys)
    assert code == 0
    (row,) = _rows(tmp_path / "oracle.csv")
    assert 0.95 <= float(row["ratio"]) <= 1.05


def test_oracle_eps_list_scales_exactly(tmp_path, capsys):
    path = _write(tmp_path, "p.json", SLOW)
    code, _, _ = _run(["oracle", path, "--eps", "1,0.5", "--grid", "64x64", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = _rows(tmp_path / "oracle.csv")
    assert list(rows[0]) == ["eps", "dp_cost", "predicted", "ratio"]
    scaled = [float(r["dp_cost"]) * float(r["eps"]) ** 2 for r in rows]
    assert scaled[0] == scaled[1]


def test_oracle_output_is_deterministic(tmp_path, capsys):
    path = _write(tmp_path, "p.json", SLOW)
    blobs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert _run(["oracle", path, "--eps", "0.5", "--grid", "32x32", "--out", str(out)], capsys)[0] == 0
        blobs.append((out / "oracle.csv").read_bytes())
    assert blobs[0] == blobs[1]


@pytest.mark.parametrize("grid", ["8x8", "64", "axb", "64x8"])
def test_oracle_bad_grid(tmp_path, capsys, grid):
    path = _write(tmp_path, "p.json", FAST)
    assert _run(["oracle", path, "--grid", grid], capsys)[0] == cli.EXIT_USAGE


@pytest.mark.parametrize("eps", ["0", "-1", "x", ""])
def test_oracle_bad_eps(tmp_path, capsys, eps):
    path = _write(tmp_path, "p.json", FAST)
    assert _run(["oracle", path, "--eps", eps], capsys)[0] == cli.EXIT_USAGE


def test_martinet_sweep(tmp_path, capsys):
    path = _write(tmp_path, "m.json", CANON)
    code, out, _ = _run(["martinet", path, "--eps-range", "0.02:0.2:8", "--out", str(tmp_path)], capsys)
    assert code == 0
    first = out.splitlines()[0]
    assert first.startswith("kappa_est=") and "residual=" in first and first.endswith("points=8")
    rows = _rows(tmp_path / "martinet_sweep.csv")
    assert list(rows[0]) == ["eps", "c", "cost_arc1", "cost_arc2", "cost_arc3", "total", "bound"]
    eps = [float(r["eps"]) for r in rows]
    assert eps[0] == pytest.approx(0.2) and eps[-1] == pytest.approx(0.02)
    assert all(b < a for a, b in zip(eps, eps[1:]))
    svg = (tmp_path / "martinet_fit.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    assert "xlink:href=\"http" not in svg and "href=\"data:" not in svg and "@import" not in svg


def test_martinet_outputs_are_deterministic(tmp_path, capsys):
    path = _write(tmp_path, "m.json", CANON)
    blobs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert _run(["martinet", path, "--eps-range", "0.05:0.2:5", "--out", str(out)], capsys)[0] == 0
        blobs.append(((out / "martinet_sweep.csv").read_bytes(), (out / "martinet_fit.svg").read_bytes()))
    assert blobs[0] == blobs[1]


@pytest.mark.parametrize("rng", ["0.02:0.2:3", "0.2:0.02:8", "0.02:0.2", "a:b:c"])
def test_martinet_bad_range(tmp_path, capsys, rng):
    path = _write(tmp_path, "m.json", CANON)
    assert _run(["martinet", path, "--eps-range", rng], capsys)[0] == cli.EXIT_USAGE


def test_martinet_bad_model(tmp_path, capsys):
    path = _write(tmp_path, "m.json", {"a": 1, "kappa": 1})
    assert _run(["martinet", path], capsys)[0] == cli.EXIT_USAGE


def test_kappa_normal_form(tmp_path, capsys):
    path = _write(tmp_path, "f.json", frame_to_dict(normal_form_frame("z+x")))
    code, out, _ = _run(["kappa", path, "--out", str(tmp_path)], capsys)
    assert code == 0
    data = json.loads((tmp_path / "kappa.json").read_text())
    assert data["kappa_bracket"] == pytest.approx(1.0, abs=1e-9)
    assert data["kappa_flow"] == pytest.approx(1.0, abs=1e-6)
    assert data["agree"] is True
    assert "agree=True" in out


def test_kappa_rescaled_omega(tmp_path, capsys):
    fp = normal_form_frame("z+x")
    scaled = fp.with_omega(fp.omega.scale(ex.parse("2+sin(x+z)", ("x", "y", "z"))))
    path = _write(tmp_path, "f.json", frame_to_dict(scaled))
    code, _, _ = _run(["kappa", path, "--out", str(tmp_path)], capsys)
    assert code == 0
    assert json.loads((tmp_path / "kappa.json").read_text())["kappa_bracket"] == pytest.approx(1.0, abs=1e-6)


def test_kappa_not_martinet(tmp_path, capsys):
    path = _write(tmp_path, "f.json", frame_to_dict(normal_form_frame("z+x")))
    code, _, err = _run(["kappa", path, "--point", "0,0,0.5", "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_GEOMETRY and "geometry" in err


@pytest.mark.parametrize("point", ["0,0", "a,b,c"])
def test_kappa_bad_point(tmp_path, capsys, point):
    path = _write(tmp_path, "f.json", frame_to_dict(normal_form_frame("z+x")))
    assert _run(["kappa", path, "--point", point], capsys)[0] == cli.EXIT_USAGE


def test_unknown_command(capsys):
    assert _run(["frobnicate"], capsys)[0] == cli.EXIT_USAGE


def test_module_entry_point(tmp_path):
    path = _write(tmp_path, "p.json", FAST)
    res = subprocess.run([sys.executable, "-m", "driftrack", "analyze", path, "--out", str(tmp_path)],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert res.stdout.startswith("regime=DriftFast constant=1.0")


def test_run_config_validation():
    with pytest.raises(cli.UsageError):
        cli.RunConfig("martinet", "m.json", eps=[0.1, 0.2, 0.05, 0.04, 0.03])
    with pytest.raises(cli.UsageError):
        cli.RunConfig("oracle", "p.json", eps=[math.nan])
