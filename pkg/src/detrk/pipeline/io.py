"""JSON readers and writers for detections, ground truth and scenes.

Readers validate every record and raise ``DataError`` naming the file and the
JSON path of the first offending value, e.g. ``dets.json: [3].bbox[2]``.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Any

import numpy as np

from ..detection_eval import Detection, GroundTruth
from ..set_matching.boxes import BoundingBox
from .scenes import SyntheticScene


class DataError(ValueError):
    pass


def read_json(path: str | os.PathLike) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def write_json(path: str | os.PathLike, obj: Any) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _fail(src, where: str, msg: str):
    raise DataError(f"{src}: {where}: {msg}")


def _number(src, where, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        _fail(src, where, f"expected a finite number, got {v!r}")
    return float(v)


def _int(src, where, v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(src, where, f"expected an integer, got {v!r}")
    return v


def _record(src, where, item, required: tuple[str, ...]) -> dict:
    if not isinstance(item, dict):
        _fail(src, where, "expected an object")
    missing = [k for k in required if k not in item]
    if missing:
        _fail(src, where, f"missing keys {missing}")
    extra = sorted(set(item) - set(required))
    if extra:
        _fail(src, where, f"unknown keys {extra}")
    if not isinstance(item["image_id"], str):
        _fail(src, f"{where}.image_id", f"expected a string, got {item['image_id']!r}")
    return item


def _box(src, where, v) -> BoundingBox:
    if not isinstance(v, list) or len(v) != 4:
        _fail(src, where, "expected [cx, cy, w, h]")
    vals = [_number(src, f"{where}[{i}]", x) for i, x in enumerate(v)]
    try:
        return BoundingBox(*vals)
    except ValueError as exc:
        _fail(src, where, str(exc))


def _array(src, obj) -> list:
    if not isinstance(obj, list):
        _fail(src, "<root>", "expected an array")
    return obj


def parse_detections(obj: Any, src: str = "<detections>") -> list[Detection]:
    out = []
    for i, item in enumerate(_array(src, obj)):
        w = f"[{i}]"
        item = _record(src, w, item, ("image_id", "bbox", "score", "class_id"))
        box = _box(src, f"{w}.bbox", item["bbox"])
        score = _number(src, f"{w}.score", item["score"])
        if not 0.0 <= score <= 1.0:
            _fail(src, f"{w}.score", f"must lie in [0, 1], got {score}")
        cls = _int(src, f"{w}.class_id", item["class_id"])
        out.append(Detection(item["image_id"], box, score, cls))
    return out


def parse_groundtruth(obj: Any, src: str = "<groundtruth>") -> list[GroundTruth]:
    out = []
    for i, item in enumerate(_array(src, obj)):
        w = f"[{i}]"
        item = _record(src, w, item, ("image_id", "bbox", "class_id", "pixel_area"))
        box = _box(src, f"{w}.bbox", item["bbox"])
        cls = _int(src, f"{w}.class_id", item["class_id"])
        area = _number(src, f"{w}.pixel_area", item["pixel_area"])
        if area <= 0:
            _fail(src, f"{w}.pixel_area", f"must be positive, got {area}")
        out.append(GroundTruth(item["image_id"], box, cls, area))
    return out


def detections_to_json(dets: list[Detection]) -> list[dict]:
    return [{"image_id": d.image_id, "bbox": d.box.as_list(), "score": d.score, "class_id": d.class_id}
            for d in dets]


def groundtruth_to_json(gts: list[GroundTruth]) -> list[dict]:
    return [{"image_id": g.image_id, "bbox": g.box.as_list(), "class_id": g.class_id,
             "pixel_area": g.pixel_area} for g in gts]


def load_detections(path) -> list[Detection]:
    return parse_detections(read_json(path), str(path))


def load_groundtruth(path) -> list[GroundTruth]:
    return parse_groundtruth(read_json(path), str(path))


def scenes_to_json(scenes: list[SyntheticScene]) -> dict:
    return {"scenes": [{"image_id": s.image_id, "image": s.image[0].tolist(),
                        "gts": groundtruth_to_json(s.gts)} for s in scenes]}


def parse_scenes(obj: Any, src: str = "<scenes>") -> list[SyntheticScene]:
    if not isinstance(obj, dict) or set(obj) != {"scenes"} or not isinstance(obj["scenes"], list):
        _fail(src, "<root>", 'expected {"scenes": [...]}')
    out = []
    for i, item in enumerate(obj["scenes"]):
        w = f"scenes[{i}]"
        item = _record(src, w, item, ("image_id", "image", "gts"))
        try:
            image = np.array(item["image"], dtype=np.float64)
        except (TypeError, ValueError):
            _fail(src, f"{w}.image", "expected a rectangular array of numbers")
        if image.ndim != 2 or min(image.shape) < 1 or not np.all(np.isfinite(image)):
            _fail(src, f"{w}.image", "expected a non-empty 2D array of finite numbers")
        gts = parse_groundtruth(item["gts"], f"{src}: {w}.gts")
        bad = [j for j, g in enumerate(gts) if g.image_id != item["image_id"]]
        if bad:
            _fail(src, f"{w}.gts[{bad[0]}].image_id", "does not match the scene image_id")
        out.append(SyntheticScene(item["image_id"], image[None], gts))
    return out


def load_scenes(path) -> list[SyntheticScene]:
    return parse_scenes(read_json(path), str(path))
