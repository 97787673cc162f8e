"""Acceptance suite: the eleven primary criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (visible even without ``-s``)
before asserting, so ``pytest tests/test_acceptance.py`` doubles as a report.
"""

import json
import time

import pytest

from detrk import selftest
from detrk.cli import main


@pytest.fixture
def report(capsys):
    def emit(number, name, passed, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {name}: {detail}")
        assert passed, detail
    return emit


SUITE_CRITERIA = [
    (1, selftest.check_hungarian),
    (2, selftest.check_dct),
    (3, selftest.check_msda),
    (4, selftest.check_gradients),
    (5, selftest.check_loss_values),
    (6, selftest.check_box_fit),
    (7, selftest.check_evaluation),
    (8, selftest.check_hff),
    (9, selftest.check_posenc),
    (10, selftest.check_denoise),
]


@pytest.mark.parametrize("number, suite", SUITE_CRITERIA, ids=[s.__name__[6:] for _, s in SUITE_CRITERIA])
def test_criterion(number, suite, report):
    res = suite()
    report(number, res.name, res.passed, res.detail)


def _round_trip(root, seed):
    t0 = time.perf_counter()
    data = root / "data"
    codes = [
        main(["gen-synthetic", "--count", "50", "--out", str(data), "--seed", str(seed)]),
        main(["forward", "--scenes", str(data), "--out", str(root / "dets.json"), "--seed", str(seed)]),
        main(["eval", "--detections", str(root / "dets.json"), "--groundtruth", str(data / "groundtruth.json"),
              "--out", str(root / "metrics.json")]),
    ]
    return codes, (root / "metrics.json").read_bytes(), time.perf_counter() - t0


def test_criterion_11_end_to_end(tmp_path, report, capsys, monkeypatch):
    monkeypatch.delenv("DETRK_SEED", raising=False)
    problems = []

    if main(["selftest"]) != 0:
        problems.append("selftest exit code nonzero")

    runs = [_round_trip(tmp_path / f"run{i}", seed=2024) for i in (1, 2)]
    if any(code != 0 for codes, _, _ in runs for code in codes):
        problems.append(f"round-trip exit codes {[r[0] for r in runs]}")
    if runs[0][1] != runs[1][1]:
        problems.append("metric reports differ between runs")
    slowest = max(r[2] for r in runs)
    if slowest >= 60.0:
        problems.append(f"round trip took {slowest:.1f} s")

    # one scene per cell keeps the layer-count sweep cheap
    one = tmp_path / "one"
    main(["gen-synthetic", "--count", "1", "--out", str(one), "--seed", "5"])
    failed_cells = []
    for enc in (0, 1, 3, 6):
        for dec in (1, 3, 6):
            cfg = tmp_path / f"cfg_{enc}_{dec}.json"
            cfg.write_text(json.dumps({"encoder_layers": enc, "decoder_layers": dec}))
            if main(["forward", "--config", str(cfg), "--scenes", str(one), "--out", str(one / "d.json")]) != 0:
                failed_cells.append((enc, dec))
    if failed_cells:
        problems.append(f"sweep cells failed: {failed_cells}")
    capsys.readouterr()

    metrics = json.loads(runs[0][1])
    detail = (f"selftest ok, 50-scene round trip {runs[0][2]:.1f}s/{runs[1][2]:.1f}s, reports identical, "
              f"mAP {metrics['mAP']:.4f}, 12 layer-count cells ran") if not problems else "; ".join(problems)
    report(11, "end_to_end", not problems, detail)
