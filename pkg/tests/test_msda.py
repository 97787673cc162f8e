import numpy as np
import pytest
from hypothesis import given, strategies as st

from detrk.msda import (MsdaParams, ReferencePoint, deform_attn_head, identity_projections, map_reference,
                        ms_deform_attn, ms_deform_attn_batch, ms_deform_attn_grad, sampling_offsets_and_weights)
from detrk.oracles import naive_msda
from detrk.tensor_core import DimensionError, bilinear_sample, finite_diff_grad, relative_error


def _zero_params(d, H, L, K):
    p = MsdaParams.random(d, H, L, K, np.random.default_rng(0))
    return p.replace(**{k: np.zeros_like(v) for k, v in p.arrays().items()})


def test_zero_parameters_uniform_weights():
    off, w = sampling_offsets_and_weights(np.ones(8), _zero_params(8, 2, 3, 2))
    assert np.array_equal(off, np.zeros((2, 3, 2, 2)))
    assert np.allclose(w, 1 / 6, atol=1e-15)


def test_offsets_and_weights_match_composition(rng):
    p = MsdaParams.random(8, 2, 2, 3, rng)
    z = rng.normal(size=8)
    off, w = sampling_offsets_and_weights(z, p)
    logits = (p.attn_weight @ z + p.attn_bias).reshape(2, 6)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    assert np.allclose(w.reshape(2, 6), e / e.sum(axis=1, keepdims=True), atol=1e-12)
    assert np.allclose(off.reshape(-1), p.offset_weight @ z + p.offset_bias, atol=1e-12)


@given(st.integers(0, 10_000))
def test_weights_normalised(seed):
    r = np.random.default_rng(seed)
    _, w = sampling_offsets_and_weights(r.normal(size=8) * 5, MsdaParams.random(8, 4, 3, 2, r, 2.0))
    assert np.all(w >= 0) and np.allclose(w.sum(axis=(1, 2)), 1.0, atol=1e-12)


def test_map_reference_examples():
    assert map_reference(ReferencePoint(0, 0), 5, 9) == (-0.5, -0.5)
    assert map_reference(ReferencePoint(0.5, 0.5), 32, 32) == (15.5, 15.5)
    assert map_reference(ReferencePoint(1, 1), 8, 8) == (7.5, 7.5)
    assert ReferencePoint(-0.3, 1.7) == ReferencePoint(0.0, 1.0)


def test_single_point_identity(rng):
    p = _zero_params(4, 1, 1, 1)
    vp, op = identity_projections(1, 4)
    p = p.replace(value_proj=vp, output_proj=op)
    x = rng.normal(size=(4, 5, 5))
    assert np.allclose(deform_attn_head(rng.normal(size=4), (1.7, 2.2), x, p), bilinear_sample(x, (1.7, 2.2)))


def test_constant_field(rng):
    p = MsdaParams.random(8, 2, 1, 3, rng, 0.05)
    vp, op = identity_projections(2, 8)
    p = p.replace(value_proj=vp, output_proj=op)
    out = deform_attn_head(rng.normal(size=8), (4.2, 3.9), np.full((8, 9, 9), -1.25), p)
    assert np.allclose(out, -1.25, atol=1e-10)


def test_head_matches_naive(rng):
    p = MsdaParams.random(8, 2, 1, 3, rng)
    x = rng.normal(size=(8, 6, 5))
    ref = ReferencePoint(0.3, 0.8)
    z = rng.normal(size=8)
    got = deform_attn_head(z, map_reference(ref, 6, 5), x, p)
    assert np.allclose(got, naive_msda(z, (ref.x, ref.y), [x], p), atol=1e-10)


def test_multiscale_example_matches_naive(rng):
    p = MsdaParams.random(8, 2, 2, 2, rng)
    pyr = [rng.normal(size=(8, 4, 4)), rng.normal(size=(8, 2, 2))]
    ref = ReferencePoint(0.45, 0.6)
    z = rng.normal(size=8)
    assert np.allclose(ms_deform_attn(z, ref, pyr, p), naive_msda(z, (0.45, 0.6), pyr, p), atol=1e-10)


def test_single_level_bit_exact(rng):
    p = MsdaParams.random(8, 2, 1, 4, rng)
    x = rng.normal(size=(8, 7, 3))
    ref = ReferencePoint(0.2, 0.9)
    z = rng.normal(size=8)
    assert np.array_equal(ms_deform_attn(z, ref, [x], p), deform_attn_head(z, map_reference(ref, 7, 3), x, p))


@given(st.integers(0, 10_000))
def test_linear_in_pyramid(seed):
    r = np.random.default_rng(seed)
    p = MsdaParams.random(4, 2, 2, 2, r)
    A = [r.normal(size=(4, 4, 4)), r.normal(size=(4, 2, 2))]
    B = [r.normal(size=(4, 4, 4)), r.normal(size=(4, 2, 2))]
    ref = ReferencePoint(*r.uniform(0, 1, 2))
    z = r.normal(size=4)
    both = ms_deform_attn(z, ref, [a + b for a, b in zip(A, B)], p)
    assert np.allclose(both, ms_deform_attn(z, ref, A, p) + ms_deform_attn(z, ref, B, p), atol=1e-10)


def test_batch_matches_per_query(rng):
    p = MsdaParams.random(16, 4, 3, 2, rng, 0.8)
    pyr = [rng.normal(size=(16, s, s + 1)) for s in (8, 4, 2)]
    Z = rng.normal(size=(25, 16))
    refs = rng.uniform(0, 1, (25, 2))
    batch = ms_deform_attn_batch(Z, refs, pyr, p)
    for q in range(25):
        assert np.allclose(batch[q], ms_deform_attn(Z[q], ReferencePoint(*refs[q]), pyr, p), atol=1e-11)


def test_shape_errors(rng):
    p = MsdaParams.random(8, 2, 2, 2, rng)
    with pytest.raises(DimensionError):
        ms_deform_attn(np.zeros(8), ReferencePoint(0.5, 0.5), [np.zeros((8, 2, 2))], p)
    with pytest.raises(DimensionError):
        ms_deform_attn(np.zeros(8), ReferencePoint(0.5, 0.5), [np.zeros((4, 2, 2))] * 2, p)
    with pytest.raises(DimensionError):
        deform_attn_head(np.zeros(8), (0, 0), np.zeros((8, 2, 2)), p)
    with pytest.raises(DimensionError):
        MsdaParams.random(10, 4, 1, 1, rng)
    with pytest.raises(DimensionError):
        p.replace(attn_bias=np.zeros(3))


def test_grad_zero_upstream_and_flat_field(rng):
    p = MsdaParams.random(4, 2, 2, 2, rng)
    pyr = [rng.normal(size=(4, 4, 4)), rng.normal(size=(4, 2, 2))]
    g = ms_deform_attn_grad(rng.normal(size=4), ReferencePoint(0.4, 0.4), pyr, p, np.zeros(4))
    assert all(not np.any(v) for k, v in g.items() if k != "pyramid")
    assert all(not np.any(v) for v in g["pyramid"])
    flat = [np.full((4, 8, 8), 0.7), np.full((4, 4, 4), 0.7)]
    g = ms_deform_attn_grad(rng.normal(size=4) * 0.1, ReferencePoint(0.5, 0.5), flat,
                            p.replace(offset_bias=p.offset_bias * 0.1, offset_weight=p.offset_weight * 0.1),
                            rng.normal(size=4))
    assert np.allclose(g["offset_bias"], 0.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_grad_blocks_match_finite_differences(seed):
    r = np.random.default_rng(100 + seed)
    p = MsdaParams.random(4, 2, 2, 2, r, 0.6)
    pyr = [r.normal(size=(4, 4, 4)), r.normal(size=(4, 2, 2))]
    ref = ReferencePoint(0.37, 0.61)
    z = r.normal(size=4)
    up = r.normal(size=4)
    g = ms_deform_attn_grad(z, ref, pyr, p, up)
    for name in MsdaParams.ARRAYS:
        num = finite_diff_grad(lambda v: up @ ms_deform_attn(z, ref, pyr, p.replace(**{name: v})),
                               getattr(p, name))
        assert np.linalg.norm(g[name] - num) <= 1e-4 * max(np.linalg.norm(num), 1e-12), name
    num = finite_diff_grad(lambda v: up @ ms_deform_attn(v, ref, pyr, p), z)
    assert relative_error(g["z_q"], num, floor=1e-3) <= 1e-4
