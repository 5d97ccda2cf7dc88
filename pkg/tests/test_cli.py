import json
import subprocess
import sys

import pytest

from crowdnet import cli


def run(args, capsys):
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_analyze_round_trip(tmp_path, capsys):
    csv_path = tmp_path / "sim.csv"
    code, _, _ = run(["simulate", "--condition", "delphi", "--trials", "30", "--seed", "4", "--out", str(csv_path)], capsys)
    assert code == 0 and csv_path.read_text().startswith("dataset_id,")
    out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["analyze", "--in", str(csv_path), "--out", str(out_a)], capsys)[0] == 0
    assert run(["analyze", "--in", str(csv_path), "--out", str(out_b), "--clusters", "auto"], capsys)[0] == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    assert "tableA2" in json.loads(out_a.read_text())


def test_simulate_json_summary(tmp_path, capsys):
    js = tmp_path / "s.json"
    code, out, _ = run(["simulate", "--trials", "5", "--network", "star", "--json", str(js)], capsys)
    assert code == 0 and out.count("\n") == 1 + 5 * 20 * 2
    assert json.loads(js.read_text())["trials"] == 5


def test_sweep_csv(capsys):
    code, out, _ = run(["sweep", "--condition", "delphi", "--axis", "rho", "--levels=-0.5,0.5", "--trials", "10"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("axis,level") and len(lines) == 1 + 2 * 4


def test_predict(capsys):
    code, out, _ = run(["predict", "--estimates", "1,2,3,4,10", "--truth", "3", "--high-index", "2", "--influence", "0.3"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["phi"] == 0.6 and doc["label"] == "Toward" and doc["phi_rule"] == "ExpectImprove"
    assert doc["reduced_model"]["critical_c_unclamped"] == pytest.approx(1.8)
    assert doc["reduced_model"]["prediction"] == "Improves"


def test_predict_from_file(tmp_path, capsys):
    f = tmp_path / "x.csv"
    f.write_text("10\n2\n2\n2\n2\n")
    code, out, _ = run(["predict", "--estimates", str(f), "--truth", "5", "--high-index", "0"], capsys)
    assert code == 0 and json.loads(out)["reduced_model"]["critical_c"] == pytest.approx(0.55)


@pytest.mark.parametrize(
    "args",
    [
        ["predict", "--truth", "3"],
        ["predict", "--estimates", "1,x", "--truth", "3"],
        ["simulate", "--n", "1", "--trials", "2"],
        ["simulate", "--rho", "2", "--condition", "delphi", "--trials", "2"],
        ["sweep", "--axis", "rho", "--levels", "a,b"],
        ["analyze", "--in", "/nonexistent.csv"],
        ["bogus"],
    ],
)
def test_validation_errors_exit_1(args, capsys):
    code, _, err = run(args, capsys)
    assert code == 1, err
    assert "error" in err


def test_analyze_bad_schema(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text("a,b\n1,2\n")
    code, _, err = run(["analyze", "--in", str(f)], capsys)
    assert code == 1 and "missing column" in err


def test_internal_error_exit_2(monkeypatch, capsys):
    def boom(*a, **k):
        raise RuntimeError("kaboom")

    monkeypatch.setattr(cli.simlab, "run_ensemble", boom)
    code, _, err = run(["simulate", "--trials", "1"], capsys)
    assert code == 2 and "kaboom" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "crowdnet", "predict", "--estimates", "1,3", "--truth", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["degenerate"] is True
