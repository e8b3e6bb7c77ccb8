"""
Low-rank factor pairs and the sine-modulated layer map

    y = sin(omega * U V^T) / g  x + b

alongside the plain map ``y = U V^T x + b`` and the frozen-base (LoRA)
form ``W0 x + delta(U, V) x``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InvalidRank, InvalidScheme

__all__ = [
    "InitScheme",
    "LowRankLayer",
    "init_layer",
    "init_factor",
    "effective_weight",
    "weight_to_factor_grads",
    "materialize",
    "forward",
    "lora_forward",
    "param_count",
    "compression_rate",
    "layer_to_dict",
    "layer_from_dict",
]

INIT_KINDS = ("kaiming_uniform", "xavier_uniform", "uniform_pm_1_over_N")
FAN_BASES = ("rows", "cols", "both")
MODES = ("plain", "sine")


@dataclass(frozen=True)
class InitScheme:
    """How factor entries are drawn.

    ``kaiming_uniform`` draws from ``U(-sqrt(6/fan), sqrt(6/fan))`` where
    ``fan`` is the factor's row count, column count, or their mean
    (``fan_basis``).  ``xavier_uniform`` uses ``sqrt(6/(rows + cols))``.
    ``uniform_pm_1_over_N`` draws from ``U(-1/N, 1/N)``; ``n_bound`` sets N
    explicitly, otherwise N is the fan picked by ``fan_basis``.
    """

    kind: str = "kaiming_uniform"
    fan_basis: str = "rows"
    seed: int = 42
    n_bound: Optional[float] = None

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise InvalidScheme(f"unknown init kind {self.kind!r}")
        if self.fan_basis not in FAN_BASES:
            raise InvalidScheme(f"unknown fan basis {self.fan_basis!r}")
        if self.n_bound is not None and self.n_bound <= 0:
            raise InvalidScheme("n_bound must be positive")

    def to_dict(self):
        return {"kind": self.kind, "fan_basis": self.fan_basis,
                "seed": int(self.seed), "n_bound": self.n_bound}


def _fan(rows: int, cols: int, basis: str) -> float:
    if basis == "rows":
        return float(rows)
    if basis == "cols":
        return float(cols)
    return (rows + cols) / 2.0


def factor_bound(rows: int, cols: int, scheme: InitScheme) -> float:
    if scheme.kind == "kaiming_uniform":
        return math.sqrt(6.0 / _fan(rows, cols, scheme.fan_basis))
    if scheme.kind == "xavier_uniform":
        return math.sqrt(6.0 / (rows + cols))
    big_n = scheme.n_bound if scheme.n_bound is not None else _fan(rows, cols, scheme.fan_basis)
    return 1.0 / big_n


def init_factor(rng: np.random.Generator, rows: int, cols: int, scheme: InitScheme) -> np.ndarray:
    """Draw one ``rows x cols`` factor from ``scheme`` using ``rng``."""
    if scheme.kind == "uniform_pm_1_over_N":
        big_n = scheme.n_bound if scheme.n_bound is not None else _fan(rows, cols, scheme.fan_basis)
        # N > k is the hypothesis under which sine modulation lifts the rank
        if big_n <= cols:
            raise InvalidScheme(f"uniform_pm_1_over_N needs N > k (N={big_n}, k={cols})")
    bound = factor_bound(rows, cols, scheme)
    return rng.uniform(-bound, bound, size=(rows, cols))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LowRankLayer:
    u: np.ndarray
    v: np.ndarray
    omega: float = 0.0
    gain: float = 1.0
    bias: Optional[np.ndarray] = None
    mode: str = "sine"
    scheme: Optional[InitScheme] = field(default=None, compare=False)

    def __post_init__(self):
        u = _frozen(self.u)
        v = _frozen(self.v)
        if u.ndim != 2 or v.ndim != 2:
            raise DimensionMismatch("factors must be 2-D")
        if u.shape[1] != v.shape[1] or u.shape[1] < 1:
            raise InvalidRank(f"factor ranks differ or are zero: {u.shape} vs {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("factors must be finite")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if self.omega < 0:
            raise ValueError("omega must be non-negative")
        bias = np.zeros(u.shape[0]) if self.bias is None else self.bias
        bias = _frozen(bias).reshape(-1)
        if bias.shape != (u.shape[0],):
            raise DimensionMismatch(f"bias length {bias.size} != m={u.shape[0]}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "gain", float(self.gain))

    @property
    def m(self) -> int:
        return self.u.shape[0]

    @property
    def n(self) -> int:
        return self.v.shape[0]

    @property
    def k(self) -> int:
        return self.u.shape[1]


def init_layer(m: int, n: int, k: int, scheme: InitScheme = InitScheme(),
               omega: float = 0.0, mode: str = "sine",
               gain: Optional[float] = None) -> LowRankLayer:
    """Sample a fresh layer.

    ``U`` (m x k) is drawn before ``V`` (n x k) from a generator seeded by
    ``scheme.seed``.  The gain defaults to ``sqrt(n)``, the layer's input
    fan.  Bias starts at zero.
    """
    if not (1 <= k <= min(m, n)):
        raise InvalidRank(f"rank k={k} outside [1, min(m, n)={min(m, n)}]")
    if omega < 0:
        raise ValueError("omega must be non-negative")
    rng = np.random.default_rng(scheme.seed)
    u = init_factor(rng, m, k, scheme)
    v = init_factor(rng, n, k, scheme)
    if gain is None:
        gain = math.sqrt(n)
    return LowRankLayer(u=u, v=v, omega=omega, gain=gain, bias=np.zeros(m),
                        mode=mode, scheme=scheme)


def effective_weight(u, v, omega: float, gain: float, mode: str) -> np.ndarray:
    """``U V^T`` (plain) or ``sin(omega U V^T) / gain`` (sine)."""
    prod = u @ v.T
    if mode == "plain":
        return prod
    return np.sin(omega * prod) / gain


def weight_to_factor_grads(u, v, omega, gain, mode, grad_w):
    """Pull a gradient w.r.t. the effective weight back onto ``U`` and ``V``.

    For the sine map ``dL/dM = (omega/g) cos(omega M) * dL/dW`` with
    ``M = U V^T``; then ``dL/dU = dL/dM V`` and ``dL/dV = (dL/dM)^T U``.
    """
    if mode == "plain":
        grad_m = grad_w
    else:
        grad_m = (omega / gain) * np.cos(omega * (u @ v.T)) * grad_w
    return grad_m @ v, grad_m.T @ u


def materialize(layer: LowRankLayer) -> np.ndarray:
    return effective_weight(layer.u, layer.v, layer.omega, layer.gain, layer.mode)


def _check_input(x, n):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != n or x.ndim not in (1, 2):
        raise DimensionMismatch(f"input has shape {x.shape}, expected (..., {n})")
    return x


def forward(layer: LowRankLayer, x) -> np.ndarray:
    """Apply the layer to a length-n vector, or row-wise to a (batch, n) array."""
    x = _check_input(x, layer.n)
    if layer.mode == "plain":
        # factor-wise: never forms the m x n product
        return (x @ layer.v) @ layer.u.T + layer.bias
    return x @ materialize(layer).T + layer.bias


def lora_forward(w0, layer: LowRankLayer, x) -> np.ndarray:
    """Frozen base plus low-rank delta: ``W0 x + delta x`` (delta has no bias)."""
    w0 = np.asarray(w0, dtype=np.float64)
    if w0.shape != (layer.m, layer.n):
        raise DimensionMismatch(f"base weight {w0.shape} does not match layer {(layer.m, layer.n)}")
    x = _check_input(x, layer.n)
    return x @ w0.T + x @ materialize(layer).T


def param_count(layer: LowRankLayer) -> int:
    """Trainable parameters: ``k (m + n)`` factor entries plus ``m`` biases."""
    return layer.k * (layer.m + layer.n) + layer.m


def compression_rate(layer: LowRankLayer, m: Optional[int] = None, n: Optional[int] = None) -> float:
    """Parameters relative to a dense ``m x n`` layer with bias.

    Not clipped: at ``k = min(m, n)`` the rate can exceed 1.
    """
    m = layer.m if m is None else m
    n = layer.n if n is None else n
    return param_count(layer) / (m * n + m)


def layer_to_dict(layer: LowRankLayer, explicit: bool = True) -> dict:
    """JSON-ready description.

    With ``explicit=False`` and a known init scheme, only the seed and
    scheme are stored and the factors are regenerated on load; this is
    valid only for untrained layers.
    """
    d = {"m": layer.m, "n": layer.n, "k": layer.k, "omega": layer.omega,
         "gain": layer.gain, "mode": layer.mode}
    if explicit or layer.scheme is None:
        d["u"] = layer.u.tolist()
        d["v"] = layer.v.tolist()
        d["bias"] = layer.bias.tolist()
    else:
        d["seed"] = int(layer.scheme.seed)
        d["init"] = layer.scheme.to_dict()
    return d


def layer_from_dict(d: dict) -> LowRankLayer:
    if "u" in d:
        layer = LowRankLayer(u=np.array(d["u"], dtype=np.float64),
                             v=np.array(d["v"], dtype=np.float64),
                             omega=d["omega"], gain=d["gain"],
                             bias=np.array(d.get("bias", np.zeros(d["m"]))),
                             mode=d["mode"])
        if (layer.m, layer.n, layer.k) != (d["m"], d["n"], d["k"]):
            raise DimensionMismatch("stored shape does not match stored factors")
        return layer
    init = dict(d.get("init", {}))
    init["seed"] = d.get("seed", init.get("seed", 42))
    scheme = InitScheme(**init)
    return init_layer(d["m"], d["n"], d["k"], scheme, omega=d["omega"],
                      mode=d["mode"], gain=d["gain"])


def layer_to_json(layer: LowRankLayer, explicit: bool = True) -> str:
    return json.dumps(layer_to_dict(layer, explicit))


def layer_from_json(text: str) -> LowRankLayer:
    return layer_from_dict(json.loads(text))
