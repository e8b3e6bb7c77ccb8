import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sinelowrank.errors import DimensionMismatch, InvalidRank, InvalidScheme
from sinelowrank.linalg import numerical_rank
from sinelowrank.lowrank import (
    InitScheme,
    LowRankLayer,
    compression_rate,
    factor_bound,
    forward,
    init_layer,
    layer_from_dict,
    layer_from_json,
    layer_to_dict,
    layer_to_json,
    lora_forward,
    materialize,
    param_count,
)


def test_full_rank_allowed_at_k_equal_min():
    layer = init_layer(4, 4, 4, InitScheme(seed=1), mode="plain")
    assert numerical_rank(materialize(layer)) == 4


@pytest.mark.parametrize("k", [0, 5, -1])
def test_rank_out_of_range(k):
    with pytest.raises(InvalidRank):
        init_layer(4, 5, k)


def test_uniform_entries_below_one_over_n():
    layer = init_layer(128, 128, 1, InitScheme("uniform_pm_1_over_N", seed=0, n_bound=128))
    assert np.all(np.abs(layer.u) < 1 / 128)
    assert np.all(np.abs(layer.v) < 1 / 128)


def test_uniform_requires_n_above_k():
    with pytest.raises(InvalidScheme):
        init_layer(8, 8, 4, InitScheme("uniform_pm_1_over_N", n_bound=4))


def test_unknown_scheme_kind():
    with pytest.raises(InvalidScheme):
        InitScheme(kind="orthogonal")


def test_factor_bounds():
    assert factor_bound(256, 5, InitScheme("kaiming_uniform", "rows")) == pytest.approx(math.sqrt(6 / 256))
    assert factor_bound(256, 5, InitScheme("kaiming_uniform", "cols")) == pytest.approx(math.sqrt(6 / 5))
    assert factor_bound(256, 5, InitScheme("xavier_uniform")) == pytest.approx(math.sqrt(6 / 261))


def test_same_seed_bitwise_identical():
    a = init_layer(16, 12, 3, InitScheme(seed=9), omega=30.0)
    b = init_layer(16, 12, 3, InitScheme(seed=9), omega=30.0)
    assert a.u.tobytes() == b.u.tobytes()
    assert a.v.tobytes() == b.v.tobytes()


def test_default_gain_is_sqrt_input_dim():
    assert init_layer(10, 49, 2).gain == pytest.approx(7.0)


def test_layer_arrays_read_only():
    layer = init_layer(6, 6, 2)
    with pytest.raises(ValueError):
        layer.u[0, 0] = 1.0


def test_factor_column_mismatch():
    with pytest.raises(InvalidRank):
        LowRankLayer(u=np.ones((3, 2)), v=np.ones((4, 1)), omega=1.0, gain=1.0,
                     bias=np.zeros(3), mode="plain")


def test_materialize_sine(rng):
    layer = init_layer(7, 5, 2, InitScheme(seed=2), omega=40.0, mode="sine")
    expected = np.sin(40.0 * layer.u @ layer.v.T) / math.sqrt(5)
    np.testing.assert_allclose(materialize(layer), expected, rtol=1e-13, atol=1e-14)


def test_plain_forward_matches_dense(rng):
    layer = init_layer(9, 6, 2, InitScheme(seed=3), omega=123.0, gain=5.0, mode="plain")
    x = rng.normal(size=6)
    np.testing.assert_allclose(forward(layer, x), layer.u @ layer.v.T @ x + layer.bias, atol=1e-12)


def test_forward_batch_equals_rowwise(rng):
    layer = init_layer(9, 6, 2, InitScheme(seed=3), omega=50.0)
    x = rng.normal(size=(4, 6))
    batched = forward(layer, x)
    for i in range(4):
        np.testing.assert_allclose(batched[i], forward(layer, x[i]), atol=1e-14)


def test_forward_wrong_input_size(rng):
    with pytest.raises(DimensionMismatch):
        forward(init_layer(4, 3, 1), rng.normal(size=4))


def test_sine_forward_matches_dense_product(rng):
    layer = init_layer(8, 8, 1, InitScheme(seed=4), omega=200.0)
    x = rng.normal(size=8)
    w = np.sin(200.0 * np.outer(layer.u[:, 0], layer.v[:, 0])) / math.sqrt(8)
    np.testing.assert_allclose(forward(layer, x), w @ x, atol=1e-13)


def test_lora_zero_factors_returns_base(rng):
    w0 = rng.normal(size=(5, 4))
    layer = LowRankLayer(u=np.zeros((5, 2)), v=np.zeros((4, 2)), omega=10.0, gain=2.0,
                         bias=np.zeros(5), mode="sine")
    x = rng.normal(size=4)
    np.testing.assert_allclose(lora_forward(w0, layer, x), w0 @ x)


def test_lora_base_shape_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        lora_forward(np.zeros((3, 3)), init_layer(4, 3, 1), np.ones(3))


@pytest.mark.parametrize("k,count", [(1, 768), (2, 1280), (5, 2816), (20, 10496)])
def test_param_count_single_layer(k, count):
    assert param_count(init_layer(256, 256, k)) == count


@pytest.mark.parametrize("k", [1, 2, 5, 20])
def test_compression_rate_formula(k):
    layer = init_layer(256, 256, k)
    assert compression_rate(layer) == pytest.approx((512 * k + 256) / (256 * 256 + 256))


def test_compression_rate_unclipped():
    layer = init_layer(4, 4, 4)
    assert compression_rate(layer) > 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 20), st.integers(2, 20), st.integers(1, 20), st.integers(0, 2**31))
def test_plain_rank_never_exceeds_k(m, n, k, seed):
    k = min(k, m, n)
    layer = init_layer(m, n, k, InitScheme(seed=seed), mode="plain")
    assert numerical_rank(materialize(layer)) <= k


def test_dict_roundtrip_explicit():
    layer = init_layer(6, 5, 2, InitScheme(seed=11), omega=12.0)
    back = layer_from_json(layer_to_json(layer))
    np.testing.assert_array_equal(back.u, layer.u)
    np.testing.assert_array_equal(materialize(back), materialize(layer))


def test_dict_roundtrip_seeded():
    layer = init_layer(6, 5, 2, InitScheme("xavier_uniform", seed=11), omega=12.0)
    d = layer_to_dict(layer, explicit=False)
    assert "u" not in d
    back = layer_from_dict(d)
    assert back.u.tobytes() == layer.u.tobytes()
