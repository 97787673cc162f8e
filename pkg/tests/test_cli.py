import json

import pytest

from detrk.cli import main
from detrk.fixtures import perfect_fixture


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_eval_perfect_detector(tmp_path, capsys):
    dets, gts = perfect_fixture()
    code = main(["eval", "--detections", _write(tmp_path / "d.json", dets),
                 "--groundtruth", _write(tmp_path / "g.json", gts), "--out", str(tmp_path / "m.json")])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split() == ["mAP", "mAP50", "mAP75", "AP_s", "AP_m", "AP_l"]
    assert lines[1].split() == ["1.0000"] * 6
    metrics = json.loads((tmp_path / "m.json").read_text())
    assert all(metrics[k] == 1.0 for k in ("mAP", "mAP50", "mAP75", "AP_s", "AP_m", "AP_l"))


def test_malformed_json_exit_2(tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text('[{"image_id": "a",')
    _, gts = perfect_fixture()
    assert main(["eval", "--detections", str(bad), "--groundtruth", _write(tmp_path / "g.json", gts)]) == 2
    assert "broken.json" in capsys.readouterr().err


def test_schema_error_names_path(tmp_path, capsys):
    dets = [{"image_id": "a", "bbox": [0.5, 0.5, 0.1, 0.1], "score": 0.5, "class_id": 0},
            {"image_id": "a", "bbox": [0.5, 0.5, 0.1], "score": 0.5, "class_id": 0}]
    _, gts = perfect_fixture()
    code = main(["eval", "--detections", _write(tmp_path / "d.json", dets),
                 "--groundtruth", _write(tmp_path / "g.json", gts)])
    assert code == 2
    assert "d.json: [1].bbox" in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path):
    assert main(["eval", "--detections", str(tmp_path / "none.json"), "--groundtruth", "x"]) == 2


@pytest.mark.parametrize("argv", [[], ["bogus"], ["eval"], ["gen-synthetic", "--count", "-1", "--out", "x"],
                                  ["forward", "--scenes"]])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1


def test_help_exit_0(capsys):
    assert main(["--help"]) == 0


def test_gen_forward_eval_loss(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("DETRK_SEED", raising=False)
    cfg = _write(tmp_path / "cfg.json", {"encoder_layers": 1, "decoder_layers": 1, "num_queries": 10})
    out = tmp_path / "data"
    assert main(["gen-synthetic", "--count", "2", "--out", str(out), "--seed", "1"]) == 0
    assert main(["forward", "--config", cfg, "--scenes", str(out), "--out", str(out / "d.json")]) == 0
    assert main(["eval", "--detections", str(out / "d.json"), "--groundtruth", str(out / "groundtruth.json")]) == 0
    assert main(["loss", "--detections", str(out / "d.json"), "--groundtruth", str(out / "groundtruth.json")]) == 0
    assert "mean set loss" in capsys.readouterr().out


def test_forward_rejects_size_mismatch(tmp_path, capsys):
    out = tmp_path / "data"
    assert main(["gen-synthetic", "--count", "1", "--out", str(out)]) == 0
    cfg = _write(tmp_path / "cfg.json", {"scene": {"image_size": 32}})
    assert main(["forward", "--config", cfg, "--scenes", str(out / "scenes.json"), "--out", "x.json"]) == 2


def test_bad_config_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path / "cfg.json", {"msda": {"heads": 8, "typo": 1}})
    assert main(["gen-synthetic", "--count", "1", "--out", str(tmp_path), "--config", cfg]) == 2
    assert "cfg.json" in capsys.readouterr().err


def test_bench_runs(capsys):
    assert main(["bench", "--repeats", "1"]) == 0
    assert "msda" in capsys.readouterr().out
