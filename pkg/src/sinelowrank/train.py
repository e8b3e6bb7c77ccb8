"""Mini-batch training loop, optimizers and reconstruction metrics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import NonFiniteLoss, ShapeMismatch
from .nn import Model, forward_model, loss_and_grads
from .seeding import rng_for
from .tasks import TaskDataset

__all__ = ["TrainConfig", "MetricsHistory", "train", "psnr", "iou", "PSNR_CAP"]

PSNR_CAP = 99.0


@dataclass(frozen=True)
class TrainConfig:
    """Training hyper-parameters.

    ``samples_per_epoch`` bounds how many points one epoch visits (drawn
    without replacement, fresh each epoch); ``None`` means a full pass.
    The per-epoch loss is measured on a fixed ``monitor_size`` subset (the
    whole dataset when it is smaller) after the epoch's updates.
    """

    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 512
    seed: int = 42
    loss: str = "mse"
    optimizer: str = "adam"
    schedule: str = "linear"
    samples_per_epoch: Optional[int] = None
    monitor_size: int = 8192

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in ("constant", "linear"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.loss not in ("mse", "bce"):
            raise ValueError(f"unknown loss {self.loss!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class MetricsHistory:
    loss: list = field(default_factory=list)
    final_psnr: Optional[float] = None
    final_iou: Optional[float] = None
    param_count: int = 0
    compression_rate: float = 1.0
    completed: bool = True

    def loss_csv(self) -> str:
        """``epoch,loss``; epoch 0 is the loss before any update."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(self.loss):
            w.writerow([i, repr(float(v))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "epochs_completed": len(self.loss) - 1,
            "initial_loss": self.loss[0] if self.loss else None,
            "final_loss": self.loss[-1] if self.loss else None,
            "final_psnr": self.final_psnr,
            "final_iou": self.final_iou,
            "param_count": self.param_count,
            "compression_rate": self.compression_rate,
            "completed": self.completed,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.summary(), **kw)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


def psnr(pred, target) -> float:
    """``10 log10(1 / MSE)`` for signals on ``[0, 1]``; capped at 99 dB."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"{pred.shape} vs {target.shape}")
    mse = float(np.mean((pred - target) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP)


def iou(pred_logits, target_bits, threshold: float = 0.5) -> float:
    """Intersection over union of ``sigmoid(logits) > threshold`` and the target set.

    Two empty sets score 1.0.
    """
    logits = np.asarray(pred_logits, dtype=np.float64)
    target = np.asarray(target_bits)
    if logits.shape != target.shape:
        raise ShapeMismatch(f"{logits.shape} vs {target.shape}")
    # sigmoid(p) > t  <=>  p > logit(t)
    cut = math.log(threshold / (1.0 - threshold))
    pred = logits > cut
    tgt = target > 0.5
    union = np.count_nonzero(pred | tgt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & tgt) / union


# --------------------------------------------------------------------------
# optimizers
# --------------------------------------------------------------------------


class SGD:
    def __init__(self, model: Model):
        self.model = model

    def step(self, grads, lr):
        for layer, g in zip(self.model.layers, grads):
            for name, grad in g.items():
                layer.params[name] -= lr * grad


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, model: Model, beta1=0.9, beta2=0.999, eps=1e-8):
        self.model = model
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [{k: np.zeros_like(v) for k, v in l.params.items()} for l in model.layers]
        self.v = [{k: np.zeros_like(v) for k, v in l.params.items()} for l in model.layers]

    def step(self, grads, lr):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for layer, g, m, v in zip(self.model.layers, grads, self.m, self.v):
            for name, grad in g.items():
                m[name] *= self.b1
                m[name] += (1.0 - self.b1) * grad
                v[name] *= self.b2
                v[name] += (1.0 - self.b2) * grad * grad
                layer.params[name] -= lr * (m[name] / c1) / (np.sqrt(v[name] / c2) + self.eps)


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------


def evaluate(model: Model, dataset: TaskDataset, history: MetricsHistory) -> None:
    pred = forward_model(model, dataset.inputs)
    if dataset.task_kind == "occupancy":
        history.final_iou = float(iou(pred, dataset.targets))
    else:
        history.final_psnr = float(psnr(pred, dataset.targets))


def train(model: Model, dataset: TaskDataset, config: TrainConfig,
          evaluate_final: bool = True) -> MetricsHistory:
    """Fit ``model`` in place and return its loss history and final metric.

    Shuffling and monitor sampling draw from streams derived from
    ``config.seed``, so equal seeds give identical runs.  A non-finite
    loss raises :class:`NonFiniteLoss` carrying the partial history.
    """
    n = len(dataset)
    if config.batch_size > n:
        raise ValueError(f"batch_size {config.batch_size} exceeds dataset size {n}")
    x_all, y_all = dataset.inputs, dataset.targets
    shuffle_rng = rng_for(config.seed, "shuffle")
    if config.monitor_size >= n:
        mon = np.arange(n)
    else:
        mon = np.sort(rng_for(config.seed, "monitor").choice(n, config.monitor_size, replace=False))
    x_mon, y_mon = x_all[mon], y_all[mon]
    per_epoch = n if config.samples_per_epoch is None else min(config.samples_per_epoch, n)
    opt = Adam(model) if config.optimizer == "adam" else SGD(model)
    history = MetricsHistory(param_count=model.param_count(),
                             compression_rate=model.compression_rate())

    def monitor():
        loss, _ = _monitor_loss(model, x_mon, y_mon, config.loss)
        if not math.isfinite(loss):
            history.completed = False
            raise NonFiniteLoss(f"loss became {loss}", history)
        history.loss.append(loss)

    monitor()
    for epoch in range(config.epochs):
        if config.schedule == "linear":
            lr = config.learning_rate * (1.0 - epoch / config.epochs)
        else:
            lr = config.learning_rate
        if per_epoch == n:
            order = shuffle_rng.permutation(n)
        else:
            order = shuffle_rng.choice(n, per_epoch, replace=False)
        for start in range(0, per_epoch, config.batch_size):
            idx = order[start:start + config.batch_size]
            try:
                _, grads = loss_and_grads(model, x_all[idx], y_all[idx], config.loss)
            except NonFiniteLoss as exc:
                history.completed = False
                raise NonFiniteLoss(str(exc), history) from None
            opt.step(grads, lr)
        monitor()
    if evaluate_final:
        evaluate(model, dataset, history)
    return history


def _monitor_loss(model, x, y, loss_kind):
    pred = forward_model(model, x)
    if not np.all(np.isfinite(pred)):
        return float("nan"), None
    if loss_kind == "mse":
        return float(np.mean((pred - y) ** 2)), None
    return float(np.mean(np.logaddexp(0.0, pred) - y * pred)), None
