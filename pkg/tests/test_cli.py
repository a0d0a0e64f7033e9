import csv
import json
import subprocess
import sys

import pytest

from emdecay.cli import main


def run(tmp_path, command, config=None, *extra):
    args = [command, "--out", str(tmp_path)]
    if config is not None:
        path = tmp_path / f"{command}_config.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    return main(args + list(extra))


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def spectrum_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("spectrum")
    assert main(["spectrum", "--out", str(out)]) == 0
    return out


def test_spectrum_default_scan(spectrum_dir):
    rows = read_csv(spectrum_dir / "spectrum.csv")
    assert rows[0] == ["xi_norm", "omega_id", "re_lambda_min", "eta", "ratio"]
    assert len(rows) == 1 + 200 * 14
    doc = json.loads((spectrum_dir / "spectrum.json").read_text())
    assert doc["passed"] and doc["rows"] == 2800
    assert float(doc["fit"]["c0"]) > 0
    assert "paper_anchor" in doc


def test_number_format(spectrum_dir):
    row = read_csv(spectrum_dir / "spectrum.csv")[1]
    assert row[1] == "0"
    mantissa, exp = row[0].split("e")
    assert len(mantissa.replace("-", "").replace(".", "")) == 15


def test_outputs_are_deterministic(tmp_path):
    cfg = {"count": 24}
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a.mkdir() or a, "spectrum", cfg) == 0
    assert run(b.mkdir() or b, "spectrum", cfg) == 0
    for name in ("spectrum.csv", "spectrum.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_unknown_command_exits_one(capsys):
    with pytest.raises(SystemExit) as err:
        main(["bogus"])
    assert err.value.code == 1
    diag = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert diag["error"] == "usage"


def test_unknown_config_key_exits_one(tmp_path, capsys):
    assert run(tmp_path, "spectrum", {"radius": 3}) == 1
    diag = json.loads(capsys.readouterr().err.strip())
    assert diag["error"] == "validation" and "radius" in diag["message"]


def test_bad_values_exit_one(tmp_path):
    assert run(tmp_path, "lpqlr", {"spec": {"p": 1}}) == 1
    assert run(tmp_path, "simulate", {"grid": {"N": 12}}) == 1
    assert main(["spectrum", "--out", str(tmp_path), "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["spectrum", "--out", str(tmp_path), "--threads", "0"]) == 1


def test_undamped_system_fails_check(tmp_path, capsys):
    system = {"A0": [[1, 0], [0, 1]], "A": [[[0, 1], [1, 0]]], "L": [[0, 0], [0, 0]], "m": 2, "n": 1,
              "name": "wave"}
    assert run(tmp_path, "spectrum", {"system": system, "count": 10}) == 2
    diag = json.loads(capsys.readouterr().err.strip())
    assert diag["error"] == "check_failed"
    assert json.loads((tmp_path / "spectrum.json").read_text())["passed"] is False


def test_lyapunov_command(tmp_path):
    assert run(tmp_path, "lyapunov", {"count": 30, "samples": 20}, "--seed", "5") == 0
    doc = json.loads((tmp_path / "lyapunov.json").read_text())
    assert doc["passed"] and doc["seed"] == 5
    assert float(doc["params"]["c1"]) > 0


def test_lpqlr_command(tmp_path):
    assert run(tmp_path, "lpqlr", {"spec": {"n": 1}}) == 0
    doc = json.loads((tmp_path / "lpqlr.json").read_text())
    assert doc["passed"]
    assert len(read_csv(tmp_path / "lpqlr.csv")) > 10


def test_simulate_command(tmp_path):
    cfg = {"grid": {"N": 32, "L": 25.132741228718345, "dims": 2}, "init": {"width": 1.5},
           "time": {"T": 4.0}}
    assert run(tmp_path, "simulate", cfg) == 0
    doc = json.loads((tmp_path / "simulate.json").read_text())
    assert doc["checks"]["constraints"] and doc["checks"]["N_bounded"]
    rows = read_csv(tmp_path / "monitors.csv")
    assert rows[0] == ["t", "l2", "h3", "N", "D2", "divE_res", "divh_res"]
    assert len(rows) == 1 + 17


def test_appendix_and_report(tmp_path):
    assert run(tmp_path, "appendix", {"count": 12}) == 0
    doc = json.loads((tmp_path / "appendix.json").read_text())
    assert doc["two_two_one"]["equal"]
    assert doc["constraint_split"]["rank"] == 1
    assert run(tmp_path, "report") == 0
    md = (tmp_path / "report.md").read_text()
    assert "General systems" in md and "verdict: pass" in md


def test_report_needs_outputs(tmp_path):
    assert run(tmp_path, "report") == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "emdecay.cli", "report", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert json.loads(proc.stderr.strip())["error"] == "validation"
