"""Toy end-to-end forward pass.

stub backbone -> MSFCA per stage -> projection + HFF -> 2D positional
encoding -> deformable encoder -> deformable decoder -> box/class heads.
Every parameter is drawn from a generator seeded by the config, so a
(config, seed) pair fixes the whole network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..detection_eval import Detection
from ..hff import ScDownParams, check_shape_chain, clip_groups, hff_fuse, project_level
from ..msda import MsdaParams, ms_deform_attn_batch
from ..msfca import FrequencyAssignment, MsfcaParams, apply_msfca, default_groups
from ..posenc import PosEncConfig, encode_2d_grid
from ..set_matching.boxes import BoundingBox
from ..set_matching.denoise import denoise_perturb
from ..tensor_core import conv2d, inverse_sigmoid, layer_norm, relu, sigmoid
from .config import ConfigError, PipelineConfig
from .scenes import SyntheticScene


@dataclass
class LayerParams:
    attn: MsdaParams
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray

    def ffn(self, x: np.ndarray) -> np.ndarray:
        return relu(x @ self.ffn_w1.T + self.ffn_b1) @ self.ffn_w2.T + self.ffn_b2


@dataclass
class ModelParams:
    backbone: list[tuple[np.ndarray, np.ndarray]]
    msfca: list[MsfcaParams]
    projections: list[np.ndarray]
    sc_down: list[ScDownParams]
    level_embed: np.ndarray
    encoder: list[LayerParams]
    decoder: list[LayerParams]
    query_content: np.ndarray
    query_pos: np.ndarray
    ref_w: np.ndarray
    ref_b: np.ndarray
    box_w: np.ndarray
    box_b: np.ndarray
    cls_w: np.ndarray
    cls_b: np.ndarray
    label_embed: np.ndarray


@dataclass
class ForwardOutput:
    boxes: np.ndarray                 # num_queries x 4 (cx, cy, w, h)
    probs: np.ndarray                 # num_queries x num_classes
    token_count: int
    level_shapes: list[tuple[int, int]]
    dn_queries: list = field(default_factory=list)


def _dense(rng, out_dim, in_dim):
    return rng.normal(0.0, 1.0 / math.sqrt(in_dim), (out_dim, in_dim))


def _layer(cfg: PipelineConfig, rng: np.random.Generator) -> LayerParams:
    d = cfg.d_model
    return LayerParams(
        MsdaParams.init(d, cfg.msda.heads, cfg.msda.levels, cfg.msda.points, rng, offset_scale=0.1),
        _dense(rng, 2 * d, d), np.zeros(2 * d), _dense(rng, d, 2 * d), np.zeros(d))


def stage_shapes(cfg: PipelineConfig) -> list[tuple[int, int, int]]:
    S = cfg.scene.image_size
    out = []
    for i, c in enumerate(cfg.backbone_channels):
        S = -(-S // 2)
        out.append((c, S, S))
    return out


def _assignment(cfg: PipelineConfig, C: int, H: int, W: int) -> FrequencyAssignment:
    n = cfg.msfca.groups if cfg.msfca.groups is not None else default_groups(C)
    if C % n:
        raise ConfigError(f"msfca.groups={n} does not divide stage width {C}")
    if cfg.msfca.pairs is not None:
        pairs = [tuple(p) for p in cfg.msfca.pairs]
        if len(pairs) != n:
            raise ConfigError(f"msfca.pairs has {len(pairs)} entries, need {n}")
        bad = [p for p in pairs if not (0 <= p[0] < H and 0 <= p[1] < W)]
        if bad:
            raise ConfigError(f"msfca.pairs {bad} out of range for a {H}x{W} stage")
        return FrequencyAssignment(n, pairs)
    return FrequencyAssignment.default(C, H, W, n)


def init_params(cfg: PipelineConfig) -> ModelParams:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    d = cfg.d_model
    shapes = stage_shapes(cfg)
    backbone, msfca = [], []
    cin = 1
    for (c, h, w) in shapes:
        backbone.append((rng.normal(0.0, math.sqrt(2.0 / (9 * cin)), (c, cin, 3, 3)), np.zeros(c)))
        msfca.append(MsfcaParams.init(c, rng, _assignment(cfg, c, h, w), scale=0.1 / math.sqrt(c)))
        cin = c
    projections = [_dense(rng, d, c) for (c, _, _) in shapes[:-1]]
    c_last = shapes[-1][0]
    projections.append(rng.normal(0.0, 1.0 / math.sqrt(9 * c_last), (d, c_last, 3, 3)))
    sc = [ScDownParams.init(d, d, rng) for _ in shapes[1:]]
    L = len(shapes)
    nq = cfg.num_queries
    return ModelParams(
        backbone=backbone,
        msfca=msfca,
        projections=projections,
        sc_down=sc,
        level_embed=rng.normal(0.0, 0.1, (L, d)),
        encoder=[_layer(cfg, rng) for _ in range(cfg.encoder_layers)],
        decoder=[_layer(cfg, rng) for _ in range(cfg.decoder_layers)],
        query_content=rng.normal(0.0, 1.0, (nq, d)),
        query_pos=rng.normal(0.0, 1.0, (nq, d)),
        ref_w=_dense(rng, 2, d),
        ref_b=np.zeros(2),
        box_w=_dense(rng, 4, d) * 0.1,
        box_b=np.array([0.0, 0.0, -1.5, -1.5]),
        cls_w=_dense(rng, cfg.num_classes, d),
        cls_b=np.zeros(cfg.num_classes),
        label_embed=rng.normal(0.0, 1.0, (cfg.num_classes, d)),
    )


def backbone_stages(image: np.ndarray, params: ModelParams) -> list[np.ndarray]:
    stages = []
    x = image
    for w, b in params.backbone:
        x = relu(conv2d(x, w, stride=2, padding=1, bias=b))
        stages.append(x)
    return stages


def build_pyramid(image: np.ndarray, cfg: PipelineConfig, params: ModelParams) -> list[np.ndarray]:
    stages = [apply_msfca(s, p) for s, p in zip(backbone_stages(image, params), params.msfca)]
    groups = clip_groups(cfg.group_norm_groups, cfg.d_model)
    P = [project_level(s, w, groups) for s, w in zip(stages, params.projections)]
    check_shape_chain(P)
    return hff_fuse(P, params.sc_down)


def _flatten(levels: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([x.reshape(x.shape[0], -1).T for x in levels], axis=0)


def _unflatten(tokens: np.ndarray, shapes: list[tuple[int, int]]) -> list[np.ndarray]:
    out, start = [], 0
    for h, w in shapes:
        out.append(tokens[start:start + h * w].T.reshape(-1, h, w))
        start += h * w
    return out


def _token_refs(shapes: list[tuple[int, int]]) -> np.ndarray:
    refs = []
    for h, w in shapes:
        ys, xs = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij")
        refs.append(np.stack([xs.ravel(), ys.ravel()], axis=1))
    return np.concatenate(refs, axis=0)


def forward_raw(scene: SyntheticScene, cfg: PipelineConfig, params: ModelParams,
                rng: np.random.Generator | None = None, denoise: bool = False) -> ForwardOutput:
    """Run the network; with ``denoise`` also build noised ground-truth queries from ``rng``."""
    pyramid = build_pyramid(scene.image, cfg, params)
    shapes = [x.shape[1:] for x in pyramid]
    if pyramid[0].shape[0] != cfg.d_model:
        raise ConfigError(f"pyramid width {pyramid[0].shape[0]} != d_model {cfg.d_model}")
    pe_cfg = PosEncConfig(cfg.d_model, cfg.posenc.temperature, cfg.posenc.temperature_mode)
    pos = _flatten([encode_2d_grid(h, w, pe_cfg) + params.level_embed[l][:, None, None]
                    for l, (h, w) in enumerate(shapes)])
    memory = _flatten(pyramid)
    refs = _token_refs(shapes)
    for layer in params.encoder:
        attn = ms_deform_attn_batch(memory + pos, refs, _unflatten(memory, shapes), layer.attn)
        memory = layer_norm(memory + attn)
        memory = layer_norm(memory + layer.ffn(memory))
    memory_levels = _unflatten(memory, shapes)

    queries = params.query_content
    query_pos = params.query_pos
    q_refs = sigmoid(query_pos @ params.ref_w.T + params.ref_b)
    dn = []
    if denoise:
        if rng is None:
            raise ValueError("denoising queries need an explicit rng")
        dn = denoise_perturb([(g.box, g.class_id) for g in scene.gts], rng,
                             cfg.dn_noise.box_noise_scale, cfg.dn_noise.label_flip_prob,
                             cfg.num_classes)
        if dn:
            queries = np.vstack([queries, params.label_embed[[q.label for q in dn]]])
            query_pos = np.vstack([query_pos, np.zeros((len(dn), cfg.d_model))])
            q_refs = np.vstack([q_refs, [[q.box.cx, q.box.cy] for q in dn]])
    for layer in params.decoder:
        attn = ms_deform_attn_batch(queries + query_pos, q_refs, memory_levels, layer.attn)
        queries = layer_norm(queries + attn)
        queries = layer_norm(queries + layer.ffn(queries))

    delta = queries @ params.box_w.T + params.box_b
    centers = sigmoid(delta[:, :2] + inverse_sigmoid(q_refs))
    sizes = np.maximum(sigmoid(delta[:, 2:]), 1e-6)
    boxes = np.concatenate([centers, sizes], axis=1)
    probs = sigmoid(queries @ params.cls_w.T + params.cls_b)
    nq = cfg.num_queries
    return ForwardOutput(boxes[:nq], probs[:nq], memory.shape[0], [tuple(s) for s in shapes], dn)


def toy_forward(scene: SyntheticScene, cfg: PipelineConfig, params: ModelParams,
                rng: np.random.Generator | None = None) -> list[Detection]:
    """One detection per query whose best class probability reaches the score floor."""
    out = forward_raw(scene, cfg, params, rng)
    dets = []
    for box, prob in zip(out.boxes, out.probs):
        c = int(np.argmax(prob))
        score = float(prob[c])
        if score >= cfg.score_floor:
            dets.append(Detection(scene.image_id, BoundingBox(*(float(v) for v in box)), score, c))
    return dets
