import json

import pytest

from spadtrack.cli import EXIT_CONFIG, EXIT_RUNTIME, main


def test_frame_rates(capsys):
    assert main(["frame-rates"]) == 0
    out = capsys.readouterr().out
    assert "histogram: 28935 fps" in out and "bin_depth: 260416 fps" in out


def test_pwl_table(capsys):
    assert main(["pwl-table"]) == 0
    assert "max_error=2.98" in capsys.readouterr().out


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["fpr", "--set", "alpha=5"]) == EXIT_CONFIG
    assert main(["fpr", "--config", str(tmp_path / "nope.ini")]) == EXIT_CONFIG
    assert main(["tracking-sequence", "--scene-dir", str(tmp_path)]) == EXIT_CONFIG
    assert main(["range-sweep", "--calibrate", "500,0.2,0.04,50"]) == EXIT_CONFIG


def test_runtime_errors_exit_1(tmp_path):
    (tmp_path / "bad.txt").write_text("1 2 | 3\n")
    assert main(["golden", "--check", str(tmp_path / "bad.txt")]) == EXIT_CONFIG
    assert main(["highres-demo", "--gate", "40"]) == EXIT_RUNTIME


def test_fpr_writes_artifacts(tmp_path):
    assert main(["fpr", "--levels", "100", "--alphas", "2", "--frames", "3", "--trials", "1000",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "fpr.csv").exists()
    meta = json.loads((tmp_path / "config.json").read_text())
    assert meta["command"] == "fpr" and meta["config"]["alpha"] == 2


def test_config_file_is_used(tmp_path, capsys):
    (tmp_path / "c.ini").write_text("[sensor]\nsignal_ref_counts = 60000\n")
    assert main(["range-sweep", "--config", str(tmp_path / "c.ini"), "--distances", "30",
                 "--reflectivities", "1", "--frames", "20", "--ambient", "5"]) == 0
    assert "det=1.000" in capsys.readouterr().out


def test_golden_roundtrip(tmp_path, capsys):
    path = tmp_path / "g.txt"
    assert main(["golden", "--write", str(path), "--count", "30"]) == 0
    assert main(["golden", "--check", str(path)]) == 0
    assert "30/30" in capsys.readouterr().out


@pytest.mark.parametrize("cmd", ["tracking-sequence", "dynamic-vision", "compression-report",
                                 "intensity-demo", "highres-demo"])
def test_experiment_commands_run(cmd, tmp_path):
    assert main([cmd, "--out", str(tmp_path), "--seed", "1"]) == 0
    assert any(tmp_path.iterdir())
