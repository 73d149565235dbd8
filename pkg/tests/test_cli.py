import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from motion_complete import quaternion as quat
from motion_complete.bvh import read_bvh
from motion_complete.cli import EXIT_CONFIG, EXIT_DATA, EXIT_DIMENSION, EXIT_DIVERGED, main
from motion_complete.data import synth_corpus
from motion_complete.masks import make_mask
from motion_complete.skeleton import LOCAL

TINY_CONFIG = {
    "model": {"n_layers": 1, "n_heads": 2, "d_model": 16, "d_ffn": 16, "max_len": 80},
    "train": {"epochs": 2, "batch_size": 4, "warmup_epochs": 1, "window": [50, 20]},
    "scenario": {"kinds": ["inbetween", "infill"]},
}


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data"), "--count", "4", "--frames", "70",
                 "--joints", "4", "--seed", "9"]) == 0
    (root / "cfg.json").write_text(json.dumps(TINY_CONFIG))
    assert main(["train", "--config", str(root / "cfg.json"), "--data", str(root / "data"),
                 "--out", str(root / "m.ckpt"), "--log", str(root / "log.jsonl")]) == 0
    return root


def test_synth_count_and_determinism(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--count", "5", "--frames", "20",
                     "--joints", "4", "--seed", "1"]) == 0
    files = sorted((tmp_path / "a").iterdir())
    assert len(files) == 5
    assert [digest(f) for f in files] == [digest(tmp_path / "b" / f.name) for f in files]


def test_synth_bvh_parses_back(tmp_path):
    main(["synth", "--out", str(tmp_path), "--count", "2", "--frames", "30", "--joints", "5",
          "--seed", "2"])
    expected = synth_corpus(2, 2, 30, 5, coord=LOCAL)
    for path, seq in zip(sorted(tmp_path.iterdir()), expected):
        back = read_bvh(path).to_sequence()
        np.testing.assert_allclose(back.positions, seq.positions, atol=1e-5)
        np.testing.assert_allclose(quat.quat_align(seq.rotations, back.rotations), seq.rotations,
                                   atol=1e-5)


def test_train_outputs(workspace):
    assert (workspace / "m.ckpt").stat().st_size > 0
    lines = [json.loads(x) for x in (workspace / "log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in lines] == [0, 1]
    assert {"loss", "rec", "lr"} <= set(lines[0])


def test_train_missing_data(tmp_path):
    assert main(["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "x")]) == EXIT_DATA


@pytest.mark.parametrize("text", ["{not json", '{"optimizer": {}}', '{"model": {"n_heads": 3}}',
                                  '{"train": {"warmup": 1}}'])
def test_train_config_errors(workspace, tmp_path, text):
    cfg = tmp_path / "bad.json"
    cfg.write_text(text)
    code = main(["train", "--config", str(cfg), "--data", str(workspace / "data"),
                 "--out", str(tmp_path / "x")])
    assert code == EXIT_CONFIG


def test_train_divergence_exit_code(workspace, tmp_path):
    code = main(["train", "--config", str(workspace / "cfg.json"), "--data", str(workspace / "data"),
                 "--out", str(tmp_path / "x"), "--lr", "10", "--epochs", "20"])
    assert code == EXIT_DIVERGED


def motion_rows(path):
    return path.read_text().split("MOTION")[1].splitlines()[3:]


def test_complete_inbetween(workspace, tmp_path, capsys):
    src = workspace / "data" / "synth_0.bvh"
    out = tmp_path / "out.bvh"
    code = main(["complete", "--checkpoint", str(workspace / "m.ckpt"), "--input", str(src),
                 "--output", str(out), "--scenario", "inbetween", "--length", "30"])
    assert code == 0
    assert "inference time" in capsys.readouterr().out
    before, after = motion_rows(src), motion_rows(out)
    assert len(after) == len(before) == 70
    mask = make_mask("inbetween", 30, 70)
    assert all(before[t] == after[t] for t in mask.keyframes)
    assert any(before[t] != after[t] for t in mask.unknown)


def test_complete_infill(workspace, tmp_path):
    src = workspace / "data" / "synth_1.bvh"
    out = tmp_path / "out.bvh"
    assert main(["complete", "--checkpoint", str(workspace / "m.ckpt"), "--input", str(src),
                 "--output", str(out), "--scenario", "infill", "--interval", "15"]) == 0
    before, after = motion_rows(src), motion_rows(out)
    assert all(before[t] == after[t] for t in range(0, 70, 15))


def test_complete_needs_scenario_parameter(workspace, tmp_path):
    code = main(["complete", "--checkpoint", str(workspace / "m.ckpt"),
                 "--input", str(workspace / "data" / "synth_0.bvh"), "--output", str(tmp_path / "o.bvh"),
                 "--scenario", "blend"])
    assert code == EXIT_CONFIG


def test_complete_dimension_mismatch(workspace, tmp_path):
    main(["synth", "--out", str(tmp_path / "d"), "--count", "1", "--frames", "70", "--joints", "6"])
    code = main(["complete", "--checkpoint", str(workspace / "m.ckpt"),
                 "--input", str(tmp_path / "d" / "synth_0.bvh"), "--output", str(tmp_path / "o.bvh"),
                 "--length", "10"])
    assert code == EXIT_DIMENSION


def test_complete_csv_round_trip(workspace, tmp_path):
    main(["synth", "--out", str(tmp_path / "c"), "--count", "1", "--frames", "70", "--joints", "4",
          "--format", "csv"])
    out = tmp_path / "o.csv"
    assert main(["complete", "--checkpoint", str(workspace / "m.ckpt"),
                 "--input", str(tmp_path / "c" / "synth_0.csv"), "--output", str(out),
                 "--length", "10"]) == 0
    assert len(out.read_text().splitlines()) == 71


def test_eval_report(workspace, tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["eval", "--checkpoint", str(workspace / "m.ckpt"), "--data", str(workspace / "data"),
                 "--out", str(out), "--jobs", "2"]) == 0
    report = json.loads(out.read_text())
    entry = report["reports"][0]
    assert entry["scenario"] == "inbetween" and entry["lengths"] == [5, 15, 30]
    assert set(entry["rows"]) == {"Zero-Vel", "Interp", "Ours"}
    for row in entry["rows"].values():
        for metric in ("l2q", "l2p", "npss"):
            assert len(row[metric]) == 3
    assert "Zero-Vel" in capsys.readouterr().out


def test_eval_dimension_mismatch(workspace, tmp_path):
    main(["synth", "--out", str(tmp_path / "d"), "--count", "1", "--frames", "70", "--joints", "6"])
    assert main(["eval", "--checkpoint", str(workspace / "m.ckpt"), "--data", str(tmp_path / "d")]) \
        == EXIT_DIMENSION


def test_bad_thread_env(workspace, tmp_path, monkeypatch):
    monkeypatch.setenv("MOTION_COMPLETE_THREADS", "many")
    code = main(["eval", "--checkpoint", str(workspace / "m.ckpt"), "--data", str(workspace / "data")])
    assert code == EXIT_CONFIG


def test_help_and_unknown_flag():
    ok = subprocess.run([sys.executable, "-m", "motion_complete.cli", "--help"], capture_output=True)
    assert ok.returncode == 0 and b"motion-complete" in ok.stdout
    bad = subprocess.run([sys.executable, "-m", "motion_complete.cli", "synth", "--out", "x", "--nope"],
                         capture_output=True)
    assert bad.returncode == 2
    with pytest.raises(SystemExit) as info:
        main(["eval", "--frobnicate"])
    assert info.value.code == 2
