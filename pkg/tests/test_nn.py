import math

import numpy as np
import pytest

from sinelowrank.errors import DimChainMismatch, DimensionMismatch, InvalidRank, InvalidScheme, NonFiniteLoss
from sinelowrank.nn import (
    LayerSpec,
    build_model,
    coordinate_mlp_specs,
    forward_model,
    loss_and_grads,
)


def numeric_grad(model, x, y, loss_kind, layer, name, idx, h=1e-6):
    p = model.layers[layer].params[name]
    old = p[idx]
    p[idx] = old + h
    lp, _ = loss_and_grads(model, x, y, loss_kind)
    p[idx] = old - h
    lm, _ = loss_and_grads(model, x, y, loss_kind)
    p[idx] = old
    return (lp - lm) / (2 * h)


def small_net(kind, activation, seed=0, k=2, omega=3.0):
    specs = [
        LayerSpec(2, 6, "dense", activation=activation, gaussian_width=0.7),
        LayerSpec(6, 5, kind, k=None if kind == "dense" else k,
                  omega=omega if kind == "lowrank_sine" else 0.0,
                  activation=activation, gaussian_width=0.7),
        LayerSpec(5, 1, "dense", activation="none"),
    ]
    return build_model(specs, seed=seed)


@pytest.mark.parametrize("kind", ["dense", "lowrank_plain", "lowrank_sine"])
@pytest.mark.parametrize("activation", ["gaussian", "relu", "sine_act", "none"])
@pytest.mark.parametrize("loss_kind", ["mse", "bce"])
def test_gradients_match_finite_differences(kind, activation, loss_kind):
    rng = np.random.default_rng(1)
    model = small_net(kind, activation)
    x = rng.uniform(-1, 1, (7, 2))
    y = (rng.random(7) > 0.5).astype(float) if loss_kind == "bce" else rng.random(7)
    _, grads = loss_and_grads(model, x, y, loss_kind)
    for li, layer in enumerate(model.layers):
        for name, p in layer.params.items():
            for idx in np.ndindex(p.shape):
                num = numeric_grad(model, x, y, loss_kind, li, name, idx)
                ana = grads[li][name][idx]
                assert abs(num - ana) <= 1e-6 * max(1.0, abs(num), abs(ana)), (li, name, idx)


def test_grad_shapes_match_params():
    model = small_net("lowrank_sine", "gaussian")
    _, grads = loss_and_grads(model, np.zeros((3, 2)), np.zeros(3))
    for layer, g in zip(model.layers, grads):
        assert set(g) == set(layer.params)
        for name in g:
            assert g[name].shape == layer.params[name].shape


def test_forward_vector_and_batch_agree():
    model = small_net("lowrank_sine", "gaussian")
    x = np.random.default_rng(0).uniform(-1, 1, (5, 2))
    batch = forward_model(model, x)
    assert batch.shape == (5,)
    for i in range(5):
        assert forward_model(model, x[i]) == pytest.approx(batch[i], abs=1e-14)


def test_forward_chunking_agrees():
    model = small_net("dense", "relu")
    x = np.random.default_rng(0).uniform(-1, 1, (50, 2))
    np.testing.assert_allclose(forward_model(model, x, chunk=7), forward_model(model, x), rtol=1e-13, atol=1e-15)


def test_forward_wrong_dim():
    with pytest.raises(DimensionMismatch):
        forward_model(small_net("dense", "relu"), np.zeros((2, 3)))


def test_dim_chain_mismatch():
    with pytest.raises(DimChainMismatch):
        build_model([LayerSpec(2, 4), LayerSpec(5, 1)])


def test_lowrank_spec_needs_valid_k():
    with pytest.raises(InvalidRank):
        LayerSpec(4, 4, "lowrank_plain", k=5)
    with pytest.raises(InvalidRank):
        LayerSpec(4, 4, "lowrank_sine", k=None)


def test_unknown_factor_init():
    with pytest.raises(InvalidScheme):
        build_model(coordinate_mlp_specs(kind="lowrank_plain", k=1), factor_init="orthogonal")


def test_build_is_deterministic():
    specs = coordinate_mlp_specs(kind="lowrank_sine", k=2, omega=100.0, width=16)
    a, b = build_model(specs, seed=5), build_model(specs, seed=5)
    for la, lb in zip(a.layers, b.layers):
        for name in la.params:
            assert la.params[name].tobytes() == lb.params[name].tobytes()


def test_fan_in_factor_bounds():
    model = build_model(coordinate_mlp_specs(kind="lowrank_plain", k=4, width=64), seed=0)
    layer = model.layers[1]
    assert np.max(np.abs(layer.params["U"])) <= 1 / math.sqrt(4)
    assert np.max(np.abs(layer.params["V"])) <= 1 / math.sqrt(64)


def test_width_factor_bounds():
    model = build_model(coordinate_mlp_specs(kind="lowrank_plain", k=4, width=64), seed=0,
                        factor_init="width")
    assert np.max(np.abs(model.layers[1].params["U"])) < 1 / 64


def test_sine_gain_is_sqrt_in_dim():
    model = build_model(coordinate_mlp_specs(kind="lowrank_sine", k=1, omega=10.0, width=64))
    assert model.layers[1].gain == pytest.approx(8.0)
    assert model.layers[0].gain == 1.0


@pytest.mark.parametrize("k,count", [(None, 132865), (1, 2817), (2, 3841), (5, 6913), (20, 22273)])
def test_occupancy_parameter_counts(k, count):
    kind = "dense" if k is None else "lowrank_sine"
    model = build_model(coordinate_mlp_specs(3, 256, 2, kind=kind, k=k, omega=50.0))
    assert model.param_count() == count
    assert model.dense_param_count() == 132865


def test_k1_compression_rate():
    model = build_model(coordinate_mlp_specs(3, 256, 2, kind="lowrank_sine", k=1, omega=200.0))
    assert model.compression_rate() == pytest.approx(0.0212, abs=1e-4)


def test_nonfinite_loss_raises():
    model = small_net("dense", "none")
    model.layers[0].params["W"][0, 0] = np.inf
    with pytest.raises(NonFiniteLoss):
        loss_and_grads(model, np.ones((2, 2)), np.zeros(2))


def test_bce_stable_for_large_logits():
    model = small_net("dense", "none")
    model.layers[-1].params["b"][:] = 800.0
    loss, _ = loss_and_grads(model, np.zeros((2, 2)), np.array([0.0, 1.0]), "bce")
    assert math.isfinite(loss)
