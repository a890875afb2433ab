import subprocess
import sys

import numpy as np
import pytest

from shar import checks
from shar.cli import cmd_gradcheck, main
from shar.persist import load_model


@pytest.fixture(scope="module")
def house_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("house")
    assert main(["synth", "--out", str(out), "--days", "3", "--seed", "7"]) == 0
    return out


FAST = ["--hidden", "8", "--lr", "0.01", "--epochs", "3"]


def test_synth_writes_files(house_dir):
    assert {p.name for p in house_dir.iterdir()} >= {"events.txt", "annotations.txt",
                                                      "meta.txt", "house.cfg"}


def test_validate(house_dir, capsys):
    assert main(["validate", "--config", str(house_dir / "house.cfg")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("3 days, 10 sensors, 6 activities (+Idle)")
    assert "Idle" in out


def test_validate_corrupt_timestamp(house_dir, tmp_path, capsys):
    bad = tmp_path / "events.txt"
    lines = (house_dir / "events.txt").read_text().splitlines()
    lines[3] = "2008-02-25 25:99:00\t2008-02-25 10:00:00\t1"
    bad.write_text("\n".join(lines) + "\n")
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"events = {bad}\nannotations = {house_dir / 'annotations.txt'}\n"
                   f"meta = {house_dir / 'meta.txt'}\n")
    assert main(["validate", "--config", str(cfg)]) == 2
    assert f"{bad}:4:" in capsys.readouterr().err


def test_missing_meta_fails_before_training(house_dir, tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"events = {house_dir / 'events.txt'}\n"
                   f"annotations = {house_dir / 'annotations.txt'}\nmeta = nowhere.txt\n")
    out = tmp_path / "out"
    assert main(["benchmark", "--config", str(cfg), "--model", "nb", "--out", str(out)]) == 2
    assert "meta file not found" in capsys.readouterr().err
    assert not out.exists()


def test_unknown_config_key(house_dir, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text((house_dir / "house.cfg").read_text() + "hiden = 3\n")
    assert main(["validate", "--config", str(cfg)]) == 2


def test_train_is_deterministic(house_dir, tmp_path, capsys):
    cfg = str(house_dir / "house.cfg")
    for run in ("a", "b"):
        assert main(["train", "--config", cfg, "--model", "lstm", "--seed", "5",
                     "--out", str(tmp_path / run), *FAST]) == 0
    a = (tmp_path / "a" / "model-lstm-last-fired.bin").read_bytes()
    assert a == (tmp_path / "b" / "model-lstm-last-fired.bin").read_bytes()
    trace = (tmp_path / "a" / "loss-lstm-last-fired.csv").read_text().splitlines()
    assert trace[0] == "epoch,mean_window_loss" and len(trace) == 1 + 3
    model, _ = load_model(tmp_path / "a" / "model-lstm-last-fired.bin")
    assert model.hidden_size == 8
    assert "training accuracy" in capsys.readouterr().out


def test_train_baseline(house_dir, tmp_path):
    assert main(["train", "--config", str(house_dir / "house.cfg"), "--model", "nb",
                 "--encoding", "raw", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "model-nb-raw.bin").exists()


def test_benchmark_all(house_dir, tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text((house_dir / "house.cfg").read_text().replace(
        "events.txt", str(house_dir / "events.txt")).replace(
        "annotations.txt", str(house_dir / "annotations.txt")).replace(
        "meta.txt", str(house_dir / "meta.txt")) + "crf_epochs = 20\n")
    assert main(["benchmark", "--config", str(cfg), "--model", "all", "--house", "A",
                 "--out", str(tmp_path), *FAST]) == 0
    text = capsys.readouterr().out
    rows = [line.split()[0] for line in text.splitlines()[3:]]
    assert rows == ["Naive", "HMM", "HSMM", "CRF", "LSTM"]
    assert "59.5±29.0" not in text  # last-fired reference, not raw
    assert "91.0±7.2" in text
    csv = (tmp_path / "benchmark-A-all-last-fired.csv").read_text().splitlines()
    assert len(csv) == 1 + 4 * 3


def test_benchmark_reference_column(house_dir, tmp_path, capsys):
    assert main(["benchmark", "--config", str(house_dir / "house.cfg"), "--model", "nb",
                 "--encoding", "raw", "--house", "A", "--out", str(tmp_path)]) == 0
    assert "77.1±20.8" in capsys.readouterr().out


def test_gradcheck_passes(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "LSTM max rel err:" in out and out.count("PASS") == 2


def test_gradcheck_fault_injection(capsys):
    assert cmd_gradcheck(corrupt=True) == 1
    assert "FAIL" in capsys.readouterr().out


def test_gradcheck_repeatable():
    assert checks.run_gradchecks(instances=2) == checks.run_gradchecks(instances=2)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "shar", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "benchmark" in proc.stdout
