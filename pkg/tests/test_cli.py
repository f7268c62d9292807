import json

import main
from core.errors import UnknownExperiment

SMALL = {
    "horizon": 6,
    "stages": 16,
    "depth": 5,
    "alpha_length": 12,
    "samples": 2,
    "sample_horizon": 24,
    "quasimeasure_stages": 12,
}


def test_run_poly3_limit(tmp_path, capsys):
    assert main.main(["run", "poly3-limit", "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "poly3-limit" / "run_manifest.json").read_text(encoding="utf-8"))
    assert manifest["verdicts"]["poly3-limit.limit"] is True
    summary = json.loads(capsys.readouterr().out)
    assert summary["experiment"] == "poly3-limit"
    assert summary["runtime"]["total_runs"] >= 1
    assert "average_seconds" in summary["runtime"]


def test_unknown_experiment_exits_with_one(tmp_path, capsys):
    assert main.main(["run", "no-such-thing", "--out", str(tmp_path)]) == 1
    assert "no-such-thing" in capsys.readouterr().err


def test_invalid_configuration_exits_with_two(tmp_path):
    assert main.main(["run", "poly3-limit", "--precision", "10", "--out", str(tmp_path)]) == 2
    assert main.main(["verify", "--depth", "40", "--out", str(tmp_path)]) == 2


def test_verify_with_config_file(tmp_path, capsys):
    path = tmp_path / "lab.json"
    path.write_text(json.dumps(SMALL), encoding="utf-8")
    assert main.main(["verify", "--config", str(path), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "[PASS] measure_flags" in out
    assert "[FAIL]" not in out


def test_lab_errors_are_reported(tmp_path, mocker):
    runner = mocker.patch("main.run_experiment", side_effect=UnknownExperiment("未知实验", witness="x"))
    assert main.main(["run", "x", "--out", str(tmp_path)]) == 1
    runner.assert_called_once()


def test_failed_verdict_exits_with_one(tmp_path, mocker):
    result = mocker.Mock(passed=False, verdicts={"limit": False})
    mocker.patch("main.run_experiment", return_value=(result, tmp_path / "run_manifest.json"))
    assert main.main(["run", "poly3-limit", "--out", str(tmp_path)]) == 1
