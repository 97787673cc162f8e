"""Oracle and invariant suites, one per acceptance criterion.

Each suite returns a :class:`CheckResult`.  ``run_all`` is what
``detrk selftest`` executes; the acceptance tests call the suites directly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracles
from .detection_eval import Detection, GroundTruth, IOU_THRESHOLDS, class_ap, map_range
from .fixtures import golden_fixture, perfect_fixture
from .hff import ScDownParams, check_shape_chain, down_shape, hff_fuse, sc_down
from .msda import (MsdaParams, ReferencePoint, deform_attn_head, identity_projections, map_reference,
                   ms_deform_attn, ms_deform_attn_grad, sampling_offsets_and_weights)
from .msfca import dct_basis, freq_compress, global_average_pool, inverse_from_compressions
from .posenc import PosEncConfig, encode_2d_grid, positional_encoding
from .set_matching import (BoundingBox, LossWeights, Prediction, denoise_perturb, fit_box, focal_grad,
                           focal_loss, giou_grad, giou_loss, hungarian_match, l1_box_loss, l1_grad,
                           loss_gradients, pair_cost, set_loss)
from .tensor_core import bilinear_sample, bilinear_sample_grad, finite_diff_grad

KINK_MARGIN = 1e-3
GRAD_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def grad_rel_error(analytic, numeric) -> float:
    """``||a - n|| / max(||a||, ||n||, 1e-12)`` over a whole parameter block."""
    a = np.ravel(np.asarray(analytic, dtype=np.float64))
    n = np.ravel(np.asarray(numeric, dtype=np.float64))
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-12))


def _near_integer(v) -> bool:
    v = np.asarray(v, dtype=np.float64)
    return bool(np.any(np.abs(v - np.round(v)) < KINK_MARGIN))


# 1 -------------------------------------------------------------------------

def check_hungarian(trials: int = 1000, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    mats = []
    for i in range(trials):
        m, n = (int(v) for v in rng.integers(1, 8, 2))
        # every third matrix is small-integer valued so ties are common
        mats.append(rng.integers(0, 5, (m, n)).astype(float) if i % 3 == 0 else rng.uniform(0, 10, (m, n)))
    t0 = time.perf_counter()
    results = [hungarian_match(c) for c in mats]
    elapsed = time.perf_counter() - t0
    bad = sum(r.total_cost != oracles.brute_force_assignment(c) for r, c in zip(results, mats))
    ok = bad == 0 and elapsed < 2.0
    return CheckResult("1 hungarian optimality", ok,
                       f"{trials - bad}/{trials} exact vs brute force, matcher time {elapsed:.3f}s (<2s)")


# 2 -------------------------------------------------------------------------

def check_dct(max_side: int = 16, seed: int = 2) -> CheckResult:
    worst_orth = 0.0
    for H in range(1, max_side + 1):
        for W in range(1, max_side + 1):
            B = np.stack([dct_basis(H, W, u, v).values.ravel() for u in range(H) for v in range(W)])
            G = B @ B.T
            norms = np.sqrt(np.diag(G))
            off = np.abs(G - np.diag(np.diag(G))) / np.outer(norms, norms)
            worst_orth = max(worst_orth, float(off.max()))
    rng = np.random.default_rng(seed)
    worst_gap = worst_parseval = 0.0
    for H, W in [(1, 1), (3, 5), (7, 7), (8, 16), (16, 16), (9, 4)]:
        X = rng.normal(size=(4, H, W))
        gap = H * W * global_average_pool(X)
        worst_gap = max(worst_gap, float(np.max(np.abs(freq_compress(X, 0, 0) - gap))))
        part = rng.normal(size=(1, H, W))
        freqs = np.array([[freq_compress(part, u, v)[0] for v in range(W)] for u in range(H)])
        worst_parseval = max(worst_parseval, float(np.max(np.abs(inverse_from_compressions(freqs) - part[0]))))
    ok = worst_orth <= 1e-12 and worst_gap <= 1e-12 and worst_parseval <= 1e-9
    return CheckResult("2 dct correctness", ok,
                       f"orthogonality {worst_orth:.1e} (<=1e-12, grids to {max_side}x{max_side}), "
                       f"(0,0) vs HW*GAP {worst_gap:.1e} (<=1e-12), reconstruction {worst_parseval:.1e} (<=1e-9)")


# 3 -------------------------------------------------------------------------

def _random_pyramid(rng, d, shapes):
    return [rng.normal(size=(d, h, w)) for h, w in shapes]


def check_msda(instances: int = 50, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    d, H, K = 8, 2, 3
    # single level vs multi-scale with L=1
    exact = True
    for _ in range(20):
        p1 = MsdaParams.random(d, H, 1, K, rng)
        x = rng.normal(size=(d, 5, 6))
        ref = ReferencePoint(*rng.uniform(0, 1, 2))
        a = ms_deform_attn(z := rng.normal(size=d), ref, [x], p1)
        b = deform_attn_head(z, map_reference(ref, 5, 6), x, p1)
        exact &= bool(np.array_equal(a, b))
    # weight normalisation
    worst_sum = 0.0
    for _ in range(50):
        p = MsdaParams.random(d, H, 3, K, rng, scale=3.0)
        _, w = sampling_offsets_and_weights(rng.normal(size=d), p)
        worst_sum = max(worst_sum, float(np.max(np.abs(w.sum(axis=(1, 2)) - 1.0))))
    # constant field
    worst_const = 0.0
    inside = True
    for _ in range(20):
        # offsets stay below one pixel and the maps are at least 4 wide, so every
        # sample lands inside the map where no zero padding is read
        p = MsdaParams.random(d, H, 3, K, rng, scale=0.05)
        vp, op = identity_projections(H, d)
        p = p.replace(value_proj=vp, output_proj=op)
        val = rng.normal()
        pyr = [np.full((d, s, s), val) for s in (12, 6, 4)]
        ref = ReferencePoint(*rng.uniform(0.4, 0.6, 2))
        z = rng.normal(size=d)
        offsets, _ = sampling_offsets_and_weights(z, p)
        inside &= bool(np.max(np.abs(offsets)) < 1.0)
        out = ms_deform_attn(z, ref, pyr, p)
        worst_const = max(worst_const, float(np.max(np.abs(out - val))))
    # naive oracle
    worst_oracle = 0.0
    for _ in range(instances):
        L = int(rng.integers(1, 4))
        shapes = [(int(rng.integers(1, 7)), int(rng.integers(1, 7))) for _ in range(L)]
        p = MsdaParams.random(d, H, L, K, rng, scale=rng.uniform(0.2, 2.0))
        pyr = _random_pyramid(rng, d, shapes)
        ref = ReferencePoint(*rng.uniform(0, 1, 2))
        z = rng.normal(size=d)
        got = ms_deform_attn(z, ref, pyr, p)
        want = oracles.naive_msda(z, (ref.x, ref.y), pyr, p)
        worst_oracle = max(worst_oracle, float(np.max(np.abs(got - want)) / max(1.0, np.max(np.abs(want)))))
    ok = exact and inside and worst_sum <= 1e-12 and worst_const <= 1e-10 and worst_oracle <= 1e-10
    return CheckResult("3 msda degeneration and normalization", ok,
                       f"L=1 bit-exact {exact}, weight sums {worst_sum:.1e} (<=1e-12), constant field "
                       f"{worst_const:.1e} (<=1e-10), naive oracle {worst_oracle:.1e} (<=1e-10, {instances} instances)")


# 4 -------------------------------------------------------------------------

def _bilinear_grads(rng, points):
    worst = 0.0
    done = 0
    while done < points:
        fmap = rng.normal(size=(2, 4, 5))
        p = rng.uniform(-1.5, 5.5, 2)
        if _near_integer(p):
            continue
        up = rng.normal(size=2)
        gmap, (gx, gy) = bilinear_sample_grad(fmap, p, up)
        num_map = finite_diff_grad(lambda m: up @ bilinear_sample(m, p), fmap)
        num_p = finite_diff_grad(lambda q: up @ bilinear_sample(fmap, q), p)
        worst = max(worst, grad_rel_error(gmap, num_map), grad_rel_error([gx, gy], num_p))
        done += 1
    return worst


def _random_box(rng) -> BoundingBox:
    w, h = rng.uniform(0.05, 0.6, 2)
    cx, cy = rng.uniform(0.1, 0.9, 2)
    return BoundingBox(cx, cy, w, h)


def _giou_smooth(a: BoundingBox, b: BoundingBox) -> bool:
    ac, bc = a.corners, b.corners
    for i in (0, 1):
        edges = sorted([ac[i], ac[i + 2], bc[i], bc[i + 2]])
        if min(np.diff(edges)) < KINK_MARGIN:
            return False
    return True


def _loss_grads(rng, points):
    worst = {"focal": 0.0, "l1": 0.0, "giou": 0.0, "pair": 0.0}
    weights = LossWeights()
    done = 0
    while done < points:
        pred, gt = _random_box(rng), _random_box(rng)
        prob = float(rng.uniform(0.01, 0.99))
        diff = np.array(pred.as_list()) - np.array(gt.as_list())
        if np.min(np.abs(diff)) < KINK_MARGIN or not _giou_smooth(pred, gt):
            continue
        x0 = np.array(pred.as_list())
        for y in (1, -1):
            num = finite_diff_grad(lambda v: focal_loss(float(v[0]), y, 2.0), np.array([prob]))
            worst["focal"] = max(worst["focal"], grad_rel_error(focal_grad(prob, y, 2.0), num))
        num = finite_diff_grad(lambda v: l1_box_loss(BoundingBox(*v), gt), x0)
        worst["l1"] = max(worst["l1"], grad_rel_error(l1_grad(pred, gt), num))
        num = finite_diff_grad(lambda v: giou_loss(BoundingBox(*v), gt), x0)
        worst["giou"] = max(worst["giou"], grad_rel_error(giou_grad(pred, gt), num))
        full = np.append(x0, prob)
        num = finite_diff_grad(lambda v: pair_cost(Prediction(BoundingBox(*v[:4]), float(v[4])), gt, weights), full)
        worst["pair"] = max(worst["pair"], grad_rel_error(loss_gradients(Prediction(pred, prob), gt, weights), num))
        done += 1
    return worst


def _msda_grads(rng, points):
    d, H, L, K = 4, 2, 2, 2
    shapes = [(3, 4), (2, 2)]
    worst: dict[str, float] = {}
    done = 0
    while done < points:
        p = MsdaParams.random(d, H, L, K, rng, scale=0.7)
        pyr = _random_pyramid(rng, d, shapes)
        ref = ReferencePoint(*rng.uniform(0.05, 0.95, 2))
        z = rng.normal(size=d)
        offsets, _ = sampling_offsets_and_weights(z, p)
        coords = [map_reference(ref, h, w) for h, w in shapes]
        pts = offsets + np.array(coords)[None, :, None, :]
        if _near_integer(pts):
            continue
        up = rng.normal(size=d)
        g = ms_deform_attn_grad(z, ref, pyr, p, up)

        def score(z_=z, pyr_=pyr, p_=p):
            return float(up @ ms_deform_attn(z_, ref, pyr_, p_))

        blocks = {"z_q": finite_diff_grad(lambda v: score(z_=v), z)}
        for l in range(L):
            def at_level(v, l=l):
                return score(pyr_=[v if i == l else x for i, x in enumerate(pyr)])
            blocks[f"pyramid[{l}]"] = finite_diff_grad(at_level, pyr[l])
        for name in MsdaParams.ARRAYS:
            blocks[name] = finite_diff_grad(lambda v, name=name: score(p_=p.replace(**{name: v})),
                                            getattr(p, name))
        for name, num in blocks.items():
            got = g["pyramid"][int(name[-2])] if name.startswith("pyramid") else g[name]
            worst[name] = max(worst.get(name, 0.0), grad_rel_error(got, num))
        done += 1
    return worst


def check_gradients(points: int = 100, seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = {"bilinear": _bilinear_grads(rng, points)}
    worst.update(_loss_grads(rng, points))
    worst.update({f"msda.{k}": v for k, v in _msda_grads(rng, points).items()})
    top = max(worst, key=worst.get)
    ok = all(v <= GRAD_TOL for v in worst.values())
    return CheckResult("4 gradient checks", ok,
                       f"{len(worst)} blocks x {points} points, worst relative error {worst[top]:.1e} "
                       f"({top}), tolerance {GRAD_TOL:g}")


# 5 -------------------------------------------------------------------------

def loss_values() -> list[tuple[str, float, float, float]]:
    """``(label, computed, expected, tolerance)`` for every hand-derived value."""
    g1 = giou_loss(BoundingBox.from_corners(0, 0, 2, 2), BoundingBox.from_corners(1, 1, 3, 3))
    g2 = giou_loss(BoundingBox.from_corners(0, 0, 1, 1), BoundingBox.from_corners(10, 10, 11, 11))
    f1 = focal_loss(0.5, 1, 2.0)
    f2 = focal_loss(0.9, -1, 2.0)
    box = BoundingBox(0.5, 0.5, 0.2, 0.2)
    s, _ = set_loss([Prediction(box, 0.5), Prediction(box, 0.5)], [box], LossWeights())
    return [
        ("giou_loss overlapping squares", g1, 1.079365, 1e-6),
        ("giou_loss distant squares", g2, 1.983471, 1e-6),
        ("focal p=0.5 positive", f1, 0.173287, 1e-6),
        ("focal p=0.9 background (0.81 ln 10)", f2, 0.81 * math.log(10.0), 1e-6),
        ("set_loss two identical preds", s, 0.693147, 1e-4),
    ]


def check_loss_values() -> CheckResult:
    rows = loss_values()
    bad = [label for label, got, want, tol in rows if not abs(got - want) <= tol]
    text = ", ".join(f"{got:.7f}" for _, got, _, _ in rows)
    return CheckResult("5 loss values", not bad,
                       f"[{text}]; focal case 2 literal 1.865098 differs from 0.81*ln10 = "
                       f"{0.81 * math.log(10.0):.7f}" + (f"; failing: {bad}" if bad else ""))


# 6 -------------------------------------------------------------------------

def check_box_fit(seeds: int = 20) -> CheckResult:
    t0 = time.perf_counter()
    converged = 0
    steps = []
    for seed in range(seeds):
        rng = np.random.default_rng(1000 + seed)
        _, n, l1 = fit_box(_random_box(rng), _random_box(rng))
        converged += l1 < 1e-3
        steps.append(n)
    elapsed = time.perf_counter() - t0
    ok = converged == seeds and elapsed < 5.0
    return CheckResult("6 box-fit convergence", ok,
                       f"{converged}/{seeds} seeds reach L1<1e-3, max steps {max(steps)} (<=5000), "
                       f"{elapsed:.2f}s (<5s)")


# 7 -------------------------------------------------------------------------

def _random_detection_set(rng):
    from .set_matching.boxes import BoundingBox as Box
    gts, dets = [], []
    for img in range(int(rng.integers(1, 4))):
        iid = f"r{img}"
        for _ in range(int(rng.integers(0, 5))):
            b = _random_box(rng)
            gts.append(GroundTruth(iid, b, 0, b.area * 10000.0))
            if rng.random() < 0.8:
                jit = rng.normal(0, 0.04, 4)
                dets.append(Detection(iid, Box(b.cx + jit[0], b.cy + jit[1], max(b.w + jit[2], 0.01),
                                               max(b.h + jit[3], 0.01)), float(rng.random()), 0))
        for _ in range(int(rng.integers(0, 3))):
            dets.append(Detection(iid, _random_box(rng), float(rng.random()), 0))
    return dets, gts


def check_evaluation(sets: int = 200, seed: int = 7) -> CheckResult:
    from .pipeline.io import parse_detections, parse_groundtruth
    fx = golden_fixture()
    report = map_range(parse_detections(fx["detections"]), parse_groundtruth(fx["groundtruth"]))
    golden_err = max(abs(report.metrics()[k] - v) for k, v in fx["expected"].items())
    dets, gts = perfect_fixture()
    perfect = map_range(parse_detections(dets), parse_groundtruth(gts)).metrics()
    perfect_ok = all(v == 1.0 for v in perfect.values())
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(sets):
        d, g = _random_detection_set(rng)
        aps = [class_ap(d, g, t) for t in IOU_THRESHOLDS]
        if any(a is not None and b is not None and b > a + 1e-12 for a, b in zip(aps, aps[1:])):
            violations += 1
    ok = golden_err <= 1e-9 and perfect_ok and violations == 0
    return CheckResult("7 evaluation oracle", ok,
                       f"golden max error {golden_err:.1e} (<=1e-9), perfect detector all 1.0 {perfect_ok}, "
                       f"AP monotone in IoU threshold on {sets - violations}/{sets} random sets")


# 8 -------------------------------------------------------------------------

def check_hff(seed: int = 8) -> CheckResult:
    rng = np.random.default_rng(seed)
    D = 6
    extents = [(13, 11), (7, 6), (4, 3), (2, 2)]
    P = [rng.normal(size=(D, h, w)) for h, w in extents]
    down = [ScDownParams.init(D, D, rng, bias=False) for _ in extents[1:]]
    F = hff_fuse(P, down)
    first_exact = bool(np.array_equal(F[0], P[0]))
    Fz = hff_fuse(P, [ScDownParams.zeros(D, D) for _ in extents[1:]])
    zero_exact = all(np.array_equal(a, b) for a, b in zip(Fz, P))
    worst = 0.0
    for (h, w) in [(1, 1), (2, 3), (5, 5), (8, 7), (9, 12)]:
        x = rng.normal(size=(3, h, w))
        prm = ScDownParams.init(3, 4, rng, bias=False)
        got = sc_down(x, prm)
        want = oracles.naive_sc_down(x, prm.pointwise_weight, prm.depthwise_weight)
        worst = max(worst, float(np.max(np.abs(got - want))))
    chain_ok = all(down_shape(h, w) == (math.ceil(h / 2), math.ceil(w / 2))
                   for h in range(1, 40) for w in range(1, 40))
    try:
        check_shape_chain(P)
    except ValueError:
        chain_ok = False
    ok = first_exact and zero_exact and worst <= 1e-10 and chain_ok
    return CheckResult("8 hierarchical fusion", ok,
                       f"F1==P1 {first_exact}, zero SCDown identity {zero_exact}, naive conv {worst:.1e} "
                       f"(<=1e-10), ceil(H/2) chain odd+even {chain_ok}")


# 9 -------------------------------------------------------------------------

def check_posenc() -> CheckResult:
    zero = positional_encoding(0.0)
    pattern = bool(np.all(zero[0::2] == 0.0) and np.all(zero[1::2] == 1.0))
    val = positional_encoding(1.0, PosEncConfig(64, 20.0))[0]
    val_ok = abs(val - 0.0499792) <= 1e-6 and abs(val - math.sin(0.05)) <= 1e-15
    temps = (1.0, 10.0, 20.0, 30.0)
    mono = True
    for pos in (0.05, 0.25, 0.5, 1.0):
        firsts = [abs(positional_encoding(pos, PosEncConfig(64, t))[0]) for t in temps]
        mono &= all(a > b for a, b in zip(firsts, firsts[1:]))
    grids_ok = all(np.all(np.isfinite(encode_2d_grid(8, 8, PosEncConfig(64, t)))) for t in temps)
    ok = pattern and val_ok and mono and grids_ok
    return CheckResult("9 positional encoding", ok,
                       f"pos=0 pattern {pattern}, out[0] at pos=1,T=20 {val:.7f} (sin 0.05), "
                       f"|out[0]| strictly decreasing over T={list(map(int, temps))} {mono}, sweep grids {grids_ok}")


# 10 ------------------------------------------------------------------------

def check_denoise(draws: int = 10000, seed: int = 10) -> CheckResult:
    rng = np.random.default_rng(seed)
    gts = []
    for _ in range(50):
        w, h = rng.uniform(0.05, 0.4, 2)
        cx, cy = rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2)
        gts.append((BoundingBox(cx, cy, w, h), int(rng.integers(0, 2))))
    same = denoise_perturb(gts, np.random.default_rng(0), 0.0, 0.0)
    identity = all(q.box == b and q.label == lab for q, (b, lab) in zip(same, gts))
    noised = denoise_perturb([gts[0]] * draws, np.random.default_rng(seed), 0.4, 0.2)
    rate = sum(q.flipped for q in noised) / draws
    a = denoise_perturb(gts, np.random.default_rng(123))
    b = denoise_perturb(gts, np.random.default_rng(123))
    determinism = all(x.box.as_list() == y.box.as_list() and x.label == y.label for x, y in zip(a, b))
    ok = identity and abs(rate - 0.2) <= 0.02 and determinism
    return CheckResult("10 denoising perturbation", ok,
                       f"zero-noise identity {identity}, flip rate {rate:.4f} over {draws} (0.2+-0.02), "
                       f"seed determinism {determinism}")


# smoke -------------------------------------------------------------------------

def check_pipeline_smoke() -> CheckResult:
    from .pipeline.config import PipelineConfig
    from .pipeline.model import forward_raw, init_params, toy_forward
    from .pipeline.scenes import gen_scenes
    cfg = PipelineConfig(encoder_layers=1, decoder_layers=1, num_queries=20)
    cfg.validate()
    scenes = gen_scenes(cfg.scene, 2, seed=5)
    params = init_params(cfg)
    out = forward_raw(scenes[0], cfg, params)
    tokens = sum(h * w for h, w in out.level_shapes)
    dets = [d for s in scenes for d in toy_forward(s, cfg, params)]
    again = [d for s in scenes for d in toy_forward(s, cfg, params)]
    ok = (out.token_count == tokens and out.boxes.shape == (cfg.num_queries, 4)
          and bool(np.all((out.boxes >= 0) & (out.boxes <= 1))) and dets == again)
    map_range(dets, [g for s in scenes for g in s.gts])
    return CheckResult("pipeline smoke", ok,
                       f"{tokens} encoder tokens, {out.boxes.shape[0]} predictions, {len(dets)} detections, "
                       f"repeat run identical {dets == again}")


SUITES: list[Callable[[], CheckResult]] = [
    check_hungarian, check_dct, check_msda, check_gradients, check_loss_values, check_box_fit,
    check_evaluation, check_hff, check_posenc, check_denoise, check_pipeline_smoke,
]


def run_all(echo: Callable[[str], None] | None = None) -> list[CheckResult]:
    results = []
    for suite in SUITES:
        try:
            res = suite()
        except Exception as exc:  # a crashing suite is a failed suite
            res = CheckResult(suite.__name__, False, f"raised {type(exc).__name__}: {exc}")
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results
