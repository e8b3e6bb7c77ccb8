"""
Paired training runs (dense vs plain low-rank vs sine low-rank) on the
bundled coordinate-regression tasks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .nn import build_model, coordinate_mlp_specs
from .seeding import child_seed
from .tasks import TaskDataset, gen_image_task, gen_occupancy_task
from .train import MetricsHistory, TrainConfig, train

__all__ = [
    "OMEGA_BY_RANK",
    "default_omega",
    "TaskProtocol",
    "OCCUPANCY",
    "IMAGE",
    "make_dataset",
    "run_variant",
    "paired_compare",
]

# frequencies used for ranks 1, 2, 5 and 20 in the occupancy experiments
OMEGA_BY_RANK = {1: 200.0, 2: 100.0, 5: 50.0, 20: 20.0}

VARIANT_KIND = {"dense": "dense", "plain": "lowrank_plain", "sine": "lowrank_sine"}


def default_omega(k: int) -> float:
    """Tabulated frequency for the largest tabulated rank not above ``k``."""
    best = max((r for r in OMEGA_BY_RANK if r <= k), default=1)
    return OMEGA_BY_RANK[best]


@dataclass(frozen=True)
class TaskProtocol:
    """Architecture and optimisation defaults for one task family."""

    task: str
    widths: tuple = (256, 256, 256)
    activation: str = "gaussian"
    gaussian_width: float = 0.1
    config: TrainConfig = TrainConfig()

    def specs(self, in_dim: int, variant: str, k: Optional[int], omega: float):
        return coordinate_mlp_specs(
            in_dim=in_dim, width=self.widths[0], hidden=len(self.widths) - 1,
            kind=VARIANT_KIND[variant], k=k, omega=omega,
            activation=self.activation, gaussian_width=self.gaussian_width)


OCCUPANCY = TaskProtocol(
    task="occupancy",
    gaussian_width=0.3,
    config=TrainConfig(epochs=200, learning_rate=1e-3, batch_size=512, loss="bce",
                       optimizer="adam", schedule="linear", samples_per_epoch=4096,
                       monitor_size=2048),
)

IMAGE = TaskProtocol(
    task="image",
    gaussian_width=0.1,
    config=TrainConfig(epochs=200, learning_rate=1e-3, batch_size=512, loss="mse",
                       optimizer="adam", schedule="linear"),
)


def make_dataset(task: str, grid: int = 64, shape: str = "sphere",
                 pattern: str = "checker", pgm: Optional[str] = None) -> TaskDataset:
    if task == "occupancy":
        return gen_occupancy_task(shape, grid)
    if task == "image":
        return gen_image_task(pattern, (grid, grid), pgm_path=pgm)
    raise ValueError(f"unknown task {task!r}")


def run_variant(dataset: TaskDataset, protocol: TaskProtocol, variant: str,
                k: Optional[int] = None, omega: Optional[float] = None, seed: int = 42,
                config: Optional[TrainConfig] = None):
    """Build and train one model; returns ``(model, history)``.

    The model seed and the data-order seed are both derived from ``seed``
    so plain and sine variants see identical batches.
    """
    if variant != "dense" and k is None:
        raise ValueError("low-rank variants need k")
    if omega is None:
        omega = default_omega(k) if variant == "sine" else 0.0
    cfg = replace(config or protocol.config, seed=child_seed(seed, "train"))
    specs = protocol.specs(dataset.inputs.shape[1], variant, k, omega)
    model = build_model(specs, seed=child_seed(seed, "model"))
    history = train(model, dataset, cfg)
    return model, history


def _metric(history: MetricsHistory):
    return history.final_iou if history.final_iou is not None else history.final_psnr


def paired_compare(dataset: TaskDataset, protocol: TaskProtocol, k: int,
                   seeds: Sequence[int], omega: Optional[float] = None,
                   config: Optional[TrainConfig] = None, with_dense: bool = False,
                   on_run=None) -> dict:
    """Plain vs sine low-rank at rank ``k`` over ``seeds``.

    ``on_run(variant, seed, model, history)`` is called after each run.
    """
    omega = default_omega(k) if omega is None else omega
    variants = (["dense"] if with_dense else []) + ["plain", "sine"]
    runs = {v: [] for v in variants}
    meta = {}
    for seed in seeds:
        for variant in variants:
            model, hist = run_variant(dataset, protocol, variant,
                                      None if variant == "dense" else k,
                                      omega if variant == "sine" else None, seed, config)
            runs[variant].append(_metric(hist))
            meta[variant] = {"param_count": hist.param_count,
                             "compression_rate": hist.compression_rate}
            if on_run is not None:
                on_run(variant, seed, model, hist)
    metric = "iou" if dataset.task_kind == "occupancy" else "psnr"
    out = {
        "metric": metric,
        "k": k,
        "omega": omega,
        "seeds": list(seeds),
        "variants": {v: {"per_seed": runs[v], "mean": float(np.mean(runs[v])), **meta[v]}
                     for v in variants},
    }
    out["delta_mean"] = out["variants"]["sine"]["mean"] - out["variants"]["plain"]["mean"]
    out["delta_per_seed"] = [s - p for s, p in zip(runs["sine"], runs["plain"])]
    return out
