import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from detrk.posenc import PosEncConfig, encode_2d_grid, encode_positions, positional_encoding


def test_zero_position_pattern():
    out = positional_encoding(0.0)
    assert np.all(out[0::2] == 0.0) and np.all(out[1::2] == 1.0)


def test_first_entry_at_defaults():
    assert positional_encoding(1.0)[0] == pytest.approx(0.0499792, abs=1e-6)
    assert positional_encoding(1.0)[0] == math.sin(0.05)


def test_asymmetric_exponents():
    d, T, pos = 64, 20.0, 3.0
    out = positional_encoding(pos, PosEncConfig(d, T))
    for i in range(d // 2):
        assert out[2 * i] == pytest.approx(math.sin(pos / (T * 10000 ** (2 * i / d))), abs=1e-15)
        assert out[2 * i + 1] == pytest.approx(math.cos(pos / (T * 10000 ** ((2 * i + 1) / d))), abs=1e-15)


def test_base_mode_matches_common_convention():
    d, T, pos = 16, 10000.0, 5.0
    out = positional_encoding(pos, PosEncConfig(d, T, "base"))
    for i in range(d // 2):
        assert out[2 * i] == pytest.approx(math.sin(pos / T ** (2 * i / d)))
        assert out[2 * i + 1] == pytest.approx(math.cos(pos / T ** (2 * i / d)))


@given(st.floats(-1e4, 1e4), st.sampled_from([1.0, 10.0, 20.0, 30.0]))
def test_bounded_and_deterministic(pos, T):
    cfg = PosEncConfig(64, T)
    a = positional_encoding(pos, cfg)
    assert np.all(np.abs(a) <= 1.0)
    assert np.array_equal(a, positional_encoding(pos, cfg))


@given(st.floats(0.01, 1.0))
def test_temperature_monotone_near_zero(pos):
    vals = [abs(positional_encoding(pos, PosEncConfig(64, T))[0]) for T in (1.0, 10.0, 20.0, 30.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_encode_positions_rows(rng):
    pos = rng.uniform(0, 50, 7)
    rows = encode_positions(pos)
    for p, row in zip(pos, rows):
        assert np.array_equal(row, positional_encoding(p))


def test_grid_axis_split():
    g = encode_2d_grid(5, 7)
    assert np.all(g[0::2, 0, 0] == 0.0) and np.all(g[1::2, 0, 0] == 1.0)
    assert np.all(g[:32] == g[:32, :, :1])      # y-half constant along x
    assert np.all(g[32:] == g[32:, :1, :])      # x-half constant along y


def test_grid_positions_distinct():
    g = encode_2d_grid(16, 16).reshape(64, -1).T
    for a, b in itertools.combinations(range(256), 2):
        assert not np.array_equal(g[a], g[b])


def test_config_validation():
    with pytest.raises(ValueError):
        PosEncConfig(63)
    with pytest.raises(ValueError):
        PosEncConfig(64, 0.0)
    with pytest.raises(ValueError):
        PosEncConfig(64, 20.0, "other")
    with pytest.raises(ValueError):
        encode_2d_grid(4, 4, PosEncConfig(6))
