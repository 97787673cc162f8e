"""Slow, independent reference implementations used to check the fast paths.

Nothing here imports the code it checks: bilinear sampling, softmax, box
overlap, matching and PR interpolation are re-derived from scratch with plain
loops and the ``math`` module.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def brute_force_assignment(cost) -> float:
    """Minimum total over every matching of size min(m, n).

    Each candidate is summed left to right in ascending row order, the same
    order in which ``hungarian_match`` reports its total, so equal matchings
    give bit-identical sums.
    """
    C = np.asarray(cost, dtype=np.float64)
    m, n = C.shape
    if m <= n:
        perms = np.array(list(itertools.permutations(range(n), m)), dtype=np.int64)
        vals = np.stack([C[r, perms[:, r]] for r in range(m)], axis=1)
    else:
        rows = np.array(list(itertools.permutations(range(m), n)), dtype=np.int64)
        vals = np.stack([C[rows[:, c], c] for c in range(n)], axis=1)
        vals = np.take_along_axis(vals, np.argsort(rows, axis=1), axis=1)
    totals = np.zeros(len(vals))
    for k in range(vals.shape[1]):
        totals = totals + vals[:, k]
    return float(totals.min())


def naive_bilinear(fmap, x: float, y: float) -> np.ndarray:
    C, H, W = fmap.shape
    out = np.zeros(C)
    for yi in (math.floor(y), math.floor(y) + 1):
        for xi in (math.floor(x), math.floor(x) + 1):
            w = (1.0 - abs(x - xi)) * (1.0 - abs(y - yi))
            if 0 <= yi < H and 0 <= xi < W and w > 0:
                for c in range(C):
                    out[c] += w * fmap[c, yi, xi]
    return out


def naive_msda(z, ref_xy, pyramid, params) -> np.ndarray:
    """Triple loop over heads, levels and points with an explicit softmax."""
    H, L, K, d = params.heads, params.levels, params.points, params.d_model
    z = np.asarray(z, dtype=np.float64)
    out = np.zeros(d)
    for h in range(H):
        logits = []
        for l in range(L):
            for k in range(K):
                row = (h * L + l) * K + k
                logits.append(sum(params.attn_weight[row, j] * z[j] for j in range(d))
                              + params.attn_bias[row])
        top = max(logits)
        ex = [math.exp(v - top) for v in logits]
        total = sum(ex)
        inner = np.zeros(params.head_dim)
        for l in range(L):
            Hl, Wl = pyramid[l].shape[1:]
            for k in range(K):
                row = (h * L + l) * K + k
                ox = sum(params.offset_weight[2 * row, j] * z[j] for j in range(d)) + params.offset_bias[2 * row]
                oy = (sum(params.offset_weight[2 * row + 1, j] * z[j] for j in range(d))
                      + params.offset_bias[2 * row + 1])
                px = ref_xy[0] * Wl - 0.5 + ox
                py = ref_xy[1] * Hl - 0.5 + oy
                sample = naive_bilinear(pyramid[l], px, py)
                a = ex[l * K + k] / total
                for e in range(params.head_dim):
                    inner[e] += a * sum(params.value_proj[h, e, c] * sample[c] for c in range(d))
        for i in range(d):
            out[i] += sum(params.output_proj[h, i, e] * inner[e] for e in range(params.head_dim))
    return out


def naive_depthwise_stride2(x, kernels) -> np.ndarray:
    C, H, W = x.shape
    Ho, Wo = (H + 1) // 2, (W + 1) // 2
    out = np.zeros((C, Ho, Wo))
    for c in range(C):
        for i in range(Ho):
            for j in range(Wo):
                acc = 0.0
                for a in range(3):
                    for b in range(3):
                        yi, xi = 2 * i + a - 1, 2 * j + b - 1
                        if 0 <= yi < H and 0 <= xi < W:
                            acc += kernels[c, a, b] * x[c, yi, xi]
                out[c, i, j] = acc
    return out


def naive_sc_down(x, pointwise, depthwise) -> np.ndarray:
    C, H, W = x.shape
    mixed = np.zeros((pointwise.shape[0], H, W))
    for o in range(pointwise.shape[0]):
        for c in range(C):
            mixed[o] += pointwise[o, c] * x[c]
    return naive_depthwise_stride2(mixed, depthwise)


def pr_enumeration_ap(outcomes, n_gt: int) -> float:
    """101-point AP by scanning every prefix of the ranked list for each recall level."""
    tp = fp = 0
    curve = []
    for o in outcomes:
        if o:
            tp += 1
        else:
            fp += 1
        curve.append((tp / n_gt, tp / (tp + fp)))
    total = 0.0
    for i in range(101):
        r = i / 100.0
        best = 0.0
        for rec, prec in curve:
            if rec >= r - 1e-12 and prec > best:
                best = prec
        total += best
    return total / 101.0


def _corners(box):
    cx, cy, w, h = box
    return cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2


def naive_iou(a, b) -> float:
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def _bucket_ok(area, bucket):
    if bucket == "all":
        return True
    if bucket == "small":
        return area < 1024
    if bucket == "large":
        return area > 4096
    return 1024 <= area <= 4096


def naive_report(dets: list[dict], gts: list[dict]) -> dict:
    """Full six-metric report from plain dicts (the JSON schema), written without the library."""
    thresholds = [round(0.5 + 0.05 * i, 2) for i in range(10)]
    scale = {}
    for g in gts:
        scale.setdefault(g["image_id"], []).append(g["pixel_area"] / (g["bbox"][2] * g["bbox"][3]))
    scale = {k: sorted(v)[len(v) // 2] if len(v) % 2 else (sorted(v)[len(v) // 2 - 1] + sorted(v)[len(v) // 2]) / 2
             for k, v in scale.items()}
    classes = sorted({g["class_id"] for g in gts} | {d["class_id"] for d in dets})
    images = sorted({g["image_id"] for g in gts} | {d["image_id"] for d in dets})

    def ap_for(c, t, bucket):
        ranked = []
        n_gt = 0
        seq = 0
        for img in images:
            G = [g for g in gts if g["image_id"] == img and g["class_id"] == c]
            D = [d for d in dets if d["image_id"] == img and d["class_id"] == c]
            D = sorted(D, key=lambda d: -d["score"])
            ign = [not _bucket_ok(g["pixel_area"], bucket) for g in G]
            n_gt += ign.count(False)
            taken = [False] * len(G)
            for d in D:
                choice = None
                for allow_ignored in (False, True):
                    best = -1.0
                    for j, g in enumerate(G):
                        ov = naive_iou(d["bbox"], g["bbox"])
                        if not taken[j] and ign[j] == allow_ignored and ov >= t and ov > best:
                            best, choice = ov, j
                    if choice is not None:
                        break
                if choice is not None:
                    taken[choice] = True
                    if not ign[choice]:
                        ranked.append((d["score"], seq, True))
                else:
                    area = d["bbox"][2] * d["bbox"][3] * scale[img] if img in scale else None
                    if area is None or _bucket_ok(area, bucket):
                        ranked.append((d["score"], seq, False))
                seq += 1
        ranked.sort(key=lambda r: (-r[0], r[1]))
        if n_gt == 0:
            return None if not ranked else 0.0
        return pr_enumeration_ap([r[2] for r in ranked], n_gt)

    def mean(vals):
        vals = [v for v in vals if v is not None]
        return sum(vals) / len(vals) if vals else None

    rows = {}
    for c in classes:
        rows[c] = {
            "AP": mean([ap_for(c, t, "all") for t in thresholds]),
            "AP50": ap_for(c, 0.5, "all"),
            "AP75": ap_for(c, 0.75, "all"),
            "AP_s": mean([ap_for(c, t, "small") for t in thresholds]),
            "AP_m": mean([ap_for(c, t, "medium") for t in thresholds]),
            "AP_l": mean([ap_for(c, t, "large") for t in thresholds]),
        }
    return {
        "mAP": mean([r["AP"] for r in rows.values()]),
        "mAP50": mean([r["AP50"] for r in rows.values()]),
        "mAP75": mean([r["AP75"] for r in rows.values()]),
        "AP_s": mean([r["AP_s"] for r in rows.values()]),
        "AP_m": mean([r["AP_m"] for r in rows.values()]),
        "AP_l": mean([r["AP_l"] for r in rows.values()]),
    }
