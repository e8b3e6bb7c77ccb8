"""
A small fully-connected coordinate network with hand-written backprop.

Layers are dense (``W x + b``), plain low-rank (``U V^T x + b``) or sine
low-rank (``sin(omega U V^T) / g x + b``).  Frequency and gain are fixed
hyper-parameters and never receive gradients.  All arithmetic is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimChainMismatch, DimensionMismatch, InvalidRank, InvalidScheme, NonFiniteLoss
from .lowrank import InitScheme, effective_weight, init_factor, weight_to_factor_grads
from .seeding import rng_for

__all__ = [
    "LayerSpec",
    "Layer",
    "Model",
    "build_model",
    "coordinate_mlp_specs",
    "forward_model",
    "loss_and_grads",
    "backward_model",
    "model_param_count",
    "KINDS",
    "ACTIVATIONS",
]

KINDS = ("dense", "lowrank_plain", "lowrank_sine")
ACTIVATIONS = ("gaussian", "relu", "sine_act", "none")
LOSSES = ("mse", "bce")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    kind: str = "dense"
    k: Optional[int] = None
    omega: float = 0.0
    activation: str = "none"
    gaussian_width: float = 0.1
    gain: Optional[float] = None

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dimensions must be positive")
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind != "dense":
            if self.k is None or not 1 <= self.k <= min(self.in_dim, self.out_dim):
                raise InvalidRank(f"low-rank layer needs 1 <= k <= {min(self.in_dim, self.out_dim)}")
        if self.gaussian_width <= 0:
            raise ValueError("gaussian_width must be positive")

    @property
    def mode(self):
        return {"lowrank_plain": "plain", "lowrank_sine": "sine"}.get(self.kind)

    def to_dict(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass
class Layer:
    """Trainable state of one layer; ``params`` holds ``W``/``b`` or ``U``/``V``/``b``."""

    spec: LayerSpec
    params: dict
    gain: float = 1.0

    def weight(self) -> np.ndarray:
        if self.spec.kind == "dense":
            return self.params["W"]
        return effective_weight(self.params["U"], self.params["V"],
                                self.spec.omega, self.gain, self.spec.mode)

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())


@dataclass
class Model:
    layers: list
    seed: int = 0

    @property
    def in_dim(self):
        return self.layers[0].spec.in_dim

    def copy(self) -> "Model":
        return Model([Layer(l.spec, {k: v.copy() for k, v in l.params.items()}, l.gain)
                      for l in self.layers], self.seed)

    def param_count(self) -> int:
        return sum(l.param_count() for l in self.layers)

    def dense_param_count(self) -> int:
        """Parameters of the same architecture with every layer dense."""
        return sum(l.spec.in_dim * l.spec.out_dim + l.spec.out_dim for l in self.layers)

    def compression_rate(self) -> float:
        return self.param_count() / self.dense_param_count()

    def state(self) -> list:
        return [l.params for l in self.layers]


model_param_count = Model.param_count


FACTOR_INITS = ("fan_in", "width")


def build_model(specs: Sequence[LayerSpec], seed: int = 42,
                factor_scheme: Optional[InitScheme] = None,
                factor_init: str = "fan_in") -> Model:
    """Initialise a network from layer specs.

    Dense weights: Kaiming uniform ``U(-sqrt(6/in), sqrt(6/in))``.
    Biases start at zero and the sine gain defaults to ``sqrt(in_dim)``.

    Low-rank factors treat ``x -> V^T x`` and ``h -> U h`` as two linear
    maps and draw each from ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, so
    ``U ~ U(-1/sqrt(k), 1/sqrt(k))`` and ``V ~ U(-1/sqrt(n), 1/sqrt(n))``.
    ``factor_init="width"`` instead draws both from ``U(-1/N, 1/N)`` with
    ``N`` the output width; at that scale ``omega U V^T`` stays in the
    near-linear part of the sine for the tabulated frequencies.  An
    explicit ``factor_scheme`` overrides both.
    """
    if factor_init not in FACTOR_INITS:
        raise InvalidScheme(f"unknown factor init {factor_init!r}")
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one layer")
    for a, b in zip(specs, specs[1:]):
        if a.out_dim != b.in_dim:
            raise DimChainMismatch(f"layer output {a.out_dim} does not feed input {b.in_dim}")
    rng = rng_for(seed, "init")
    layers = []
    for spec in specs:
        if spec.kind == "dense":
            bound = math.sqrt(6.0 / spec.in_dim)
            params = {"W": rng.uniform(-bound, bound, (spec.out_dim, spec.in_dim))}
        elif factor_scheme is not None or factor_init == "width":
            scheme = factor_scheme or InitScheme("uniform_pm_1_over_N", "rows", seed,
                                                 n_bound=float(spec.out_dim))
            params = {"U": init_factor(rng, spec.out_dim, spec.k, scheme),
                      "V": init_factor(rng, spec.in_dim, spec.k, scheme)}
        else:
            bu = 1.0 / math.sqrt(spec.k)
            bv = 1.0 / math.sqrt(spec.in_dim)
            params = {"U": rng.uniform(-bu, bu, (spec.out_dim, spec.k)),
                      "V": rng.uniform(-bv, bv, (spec.in_dim, spec.k))}
        params["b"] = np.zeros(spec.out_dim)
        gain = spec.gain if spec.gain is not None else math.sqrt(spec.in_dim)
        layers.append(Layer(spec, params, gain if spec.kind == "lowrank_sine" else 1.0))
    return Model(layers, seed)


def coordinate_mlp_specs(in_dim: int = 3, width: int = 256, hidden: int = 2,
                         kind: str = "dense", k: Optional[int] = None, omega: float = 0.0,
                         activation: str = "gaussian", gaussian_width: float = 0.1,
                         out_dim: int = 1) -> list:
    """Input layer, ``hidden`` square ``width x width`` layers, linear output.

    Only the square hidden layers take ``kind``; the input and output
    projections stay dense.
    """
    specs = [LayerSpec(in_dim, width, "dense", activation=activation,
                       gaussian_width=gaussian_width)]
    for _ in range(hidden):
        specs.append(LayerSpec(width, width, kind, k=None if kind == "dense" else k,
                               omega=omega if kind == "lowrank_sine" else 0.0,
                               activation=activation, gaussian_width=gaussian_width))
    specs.append(LayerSpec(width, out_dim, "dense", activation="none"))
    return specs


# --------------------------------------------------------------------------
# forward / backward
# --------------------------------------------------------------------------


def _activate(z, spec):
    act = spec.activation
    if act == "none":
        return z
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "sine_act":
        return np.sin(z)
    return np.exp(-(z * z) / (2.0 * spec.gaussian_width**2))


def _activation_grad(z, out, spec):
    act = spec.activation
    if act == "none":
        return 1.0
    if act == "relu":
        return (z > 0).astype(z.dtype)
    if act == "sine_act":
        return np.cos(z)
    return -out * z / spec.gaussian_width**2


def _check_x(model, x):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise DimensionMismatch(f"input shape {x.shape} does not match in_dim {model.in_dim}")
    return x, squeeze


def forward_model(model: Model, x, chunk: int = 65536) -> np.ndarray:
    """Network output for one coordinate (1-D) or a batch of rows (2-D).

    A single-output network returns scalars / a 1-D array.
    """
    x, squeeze = _check_x(model, x)
    weights = [l.weight() for l in model.layers]
    outs = []
    for start in range(0, x.shape[0], chunk):
        h = x[start:start + chunk]
        for layer, w in zip(model.layers, weights):
            h = _activate(h @ w.T + layer.params["b"], layer.spec)
        outs.append(h)
    out = np.concatenate(outs, axis=0)
    if out.shape[1] == 1:
        out = out[:, 0]
    return out[0] if squeeze else out


def _loss(pred, y, loss_kind):
    if loss_kind == "mse":
        r = pred - y
        return float(np.mean(r * r)), 2.0 * r / r.size
    if loss_kind == "bce":
        # logits; softplus(p) - y p is stable for large |p|
        loss = float(np.mean(np.logaddexp(0.0, pred) - y * pred))
        sig = np.exp(-np.logaddexp(0.0, -pred))
        return loss, (sig - y) / y.size
    raise ValueError(f"unknown loss {loss_kind!r}")


def loss_and_grads(model: Model, x, y, loss_kind: str = "mse"):
    """Mean loss over the batch and its gradient for every trainable tensor.

    Returns ``(loss, grads)`` with ``grads[i]`` a dict keyed like
    ``model.layers[i].params``.
    """
    x, _ = _check_x(model, x)
    y = np.asarray(y, dtype=np.float64).reshape(x.shape[0], -1)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    cache = []
    h = x
    for layer in model.layers:
        w = layer.weight()
        z = h @ w.T + layer.params["b"]
        out = _activate(z, layer.spec)
        cache.append((h, w, z, out))
        h = out
    if not np.all(np.isfinite(h)):
        raise NonFiniteLoss("forward pass produced non-finite outputs")
    loss, delta = _loss(h, y, loss_kind)
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        h_in, w, z, out = cache[i]
        delta = delta * _activation_grad(z, out, layer.spec)
        grad_w = delta.T @ h_in
        g = {"b": delta.sum(axis=0)}
        if layer.spec.kind == "dense":
            g["W"] = grad_w
        else:
            g["U"], g["V"] = weight_to_factor_grads(layer.params["U"], layer.params["V"],
                                                    layer.spec.omega, layer.gain,
                                                    layer.spec.mode, grad_w)
        grads[i] = g
        if i:
            delta = delta @ w
    return loss, grads


def backward_model(model: Model, batch, loss_kind: str = "mse"):
    """Gradients only; ``batch`` is an ``(inputs, targets)`` pair."""
    return loss_and_grads(model, batch[0], batch[1], loss_kind)[1]
