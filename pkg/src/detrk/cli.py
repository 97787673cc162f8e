"""Command-line entry point: ``detrk <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or schema error, 3 a selftest
suite failed.
"""

from __future__ import annotations

import argparse
import sys
import time
from collections import defaultdict
from pathlib import Path

import numpy as np

from .detection_eval import map_range
from .pipeline.config import ConfigError, load_config
from .pipeline.io import (DataError, detections_to_json, groundtruth_to_json, load_detections,
                          load_groundtruth, load_scenes, scenes_to_json, write_json)
from .pipeline.model import init_params, toy_forward
from .pipeline.scenes import gen_scenes
from .set_matching import LossWeights, Prediction, set_loss

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _nonnegative(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="detrk", description="Toy ultrasound nodule detection transformer.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-synthetic", help="write synthetic scenes and their ground truth")
    p.add_argument("--count", type=_nonnegative, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="pipeline config JSON (scene settings)")

    p = sub.add_parser("forward", help="run the toy pipeline over a scenes file")
    p.add_argument("--config")
    p.add_argument("--scenes", required=True, help="scenes.json or the directory holding it")
    p.add_argument("--out", required=True, help="detections JSON to write")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--detections", required=True)
    p.add_argument("--groundtruth", required=True)
    p.add_argument("--out", help="metrics JSON to write")

    p = sub.add_parser("loss", help="Hungarian-matched set loss per image and class")
    p.add_argument("--detections", required=True)
    p.add_argument("--groundtruth", required=True)
    p.add_argument("--config")

    p = sub.add_parser("bench", help="time each kernel on fixed sizes")
    p.add_argument("--repeats", type=int, default=3)

    sub.add_parser("selftest", help="run every oracle and invariant suite")
    return parser


def _scenes_path(arg: str) -> Path:
    path = Path(arg)
    return path / "scenes.json" if path.is_dir() else path


def cmd_gen_synthetic(args) -> int:
    cfg = load_config(args.config, args.seed)
    scenes = gen_scenes(cfg.scene, args.count, cfg.seed)
    out = Path(args.out)
    write_json(out / "scenes.json", scenes_to_json(scenes))
    write_json(out / "groundtruth.json", groundtruth_to_json([g for s in scenes for g in s.gts]))
    print(f"wrote {len(scenes)} scenes ({sum(len(s.gts) for s in scenes)} nodules) to {out}")
    return EXIT_OK


def cmd_forward(args) -> int:
    cfg = load_config(args.config, args.seed)
    scenes = load_scenes(_scenes_path(args.scenes))
    size = cfg.scene.image_size
    for s in scenes:
        if s.image.shape[1:] != (size, size):
            raise DataError(f"{args.scenes}: scene {s.image_id} is {s.image.shape[1]}x{s.image.shape[2]}, "
                            f"config expects {size}x{size}")
    params = init_params(cfg)
    dets = [d for s in scenes for d in toy_forward(s, cfg, params)]
    write_json(args.out, detections_to_json(dets))
    print(f"wrote {len(dets)} detections for {len(scenes)} scenes to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    report = map_range(load_detections(args.detections), load_groundtruth(args.groundtruth))
    if args.out:
        write_json(args.out, report.to_json())
    print(report.table())
    return EXIT_OK


def cmd_loss(args) -> int:
    cfg = load_config(args.config)
    lw = cfg.loss_weights
    weights = LossWeights(focal=lw.focal, l1=lw.l1, giou=lw.giou, gamma=lw.gamma)
    dets = load_detections(args.detections)
    gts = load_groundtruth(args.groundtruth)
    preds, boxes = defaultdict(list), defaultdict(list)
    for d in dets:
        preds[(d.image_id, d.class_id)].append(Prediction(d.box, d.score))
    for g in gts:
        boxes[(g.image_id, g.class_id)].append(g.box)
    total, groups = 0.0, 0
    for key in sorted(preds):
        value, result = set_loss(preds[key], boxes.get(key, []), weights)
        pairs = " ".join(f"{i}->{j}" for i, j in result.pairs) or "-"
        print(f"{key[0]} class {key[1]}: loss {value:.6f} pairs {pairs} "
              f"unmatched predictions {len(result.unmatched_predictions)}")
        total += value
        groups += 1
    missed = sorted(set(boxes) - set(preds))
    for key in missed:
        print(f"{key[0]} class {key[1]}: {len(boxes[key])} ground truths without predictions")
    print(f"mean set loss over {groups} image/class groups: {total / groups if groups else float('nan'):.6f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .hff import ScDownParams, hff_fuse
    from .msda import MsdaParams, ms_deform_attn_batch
    from .msfca import FrequencyAssignment, MsfcaParams, apply_msfca
    from .pipeline.config import PipelineConfig
    from .pipeline.scenes import gen_synthetic_scene
    from .posenc import encode_2d_grid
    from .set_matching import hungarian_match

    rng = np.random.default_rng(0)
    d = 64
    pyramid = [rng.normal(size=(d, s, s)) for s in (32, 16, 8, 4)]
    msda = MsdaParams.init(d, 8, 4, 4, rng)
    queries = rng.normal(size=(100, d))
    refs = rng.uniform(0, 1, (100, 2))
    stage = rng.normal(size=(64, 16, 16))
    fca = MsfcaParams.init(64, rng, FrequencyAssignment.default(64, 16, 16, 16))
    down = [ScDownParams.init(d, d, rng) for _ in range(3)]
    cost = rng.uniform(0, 1, (100, 8))
    cfg = PipelineConfig()
    params = init_params(cfg)
    scene = gen_synthetic_scene(cfg.scene, rng)
    kernels = [
        ("msda 100 queries, 4 levels 32..4", lambda: ms_deform_attn_batch(queries, refs, pyramid, msda)),
        ("msfca 64x16x16, 16 groups", lambda: apply_msfca(stage, fca)),
        ("hff 4 levels 32..4, D=64", lambda: hff_fuse(pyramid, down)),
        ("posenc 2d grid 32x32, d=64", lambda: encode_2d_grid(32, 32)),
        ("hungarian 100x8", lambda: hungarian_match(cost)),
        ("toy_forward 64x64, 6+6 layers", lambda: toy_forward(scene, cfg, params)),
    ]
    for name, fn in kernels:
        times = []
        for _ in range(max(args.repeats, 1)):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        print(f"{name:<34} {min(times) * 1e3:10.2f} ms")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_all
    results = run_all(echo=lambda line: print(line, flush=True))
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed")
    return EXIT_INVARIANT if failed else EXIT_OK


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "forward": cmd_forward,
    "eval": cmd_eval,
    "loss": cmd_loss,
    "bench": cmd_bench,
    "selftest": cmd_selftest,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:      # --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (DataError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
