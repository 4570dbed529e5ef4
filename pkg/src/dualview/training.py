"""Mini-batch SGD with momentum, deterministic per (init, data, seed)."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .datasets import DatasetBundle
from .nn import Model, loss_and_grad


class TrainingDivergedError(RuntimeError):
    """Loss or parameters became non-finite during optimization."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class TrainResult:
    model: Model
    epoch_losses: list[float]  # epochs + 1 entries: before training, then after each epoch


def dataset_loss(model: Model, data: DatasetBundle) -> float:
    loss, _ = loss_and_grad(model, data.features, data.labels)
    return loss


def train(
    init: Model,
    data: DatasetBundle,
    cfg: TrainConfig,
    param_mask: np.ndarray | None = None,
) -> TrainResult:
    """SGD with momentum; shuffles every epoch from ``cfg.seed``.

    ``param_mask`` restricts updates to the flagged parameters (the rest stay
    bit-identical); used by saliency-masked fine-tuning.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    if data.dim != init.input_dim:
        raise ValueError(f"data dim {data.dim} does not match model input {init.input_dim}")
    if param_mask is not None:
        param_mask = np.asarray(param_mask, dtype=bool)
        if param_mask.shape != init.params.shape:
            raise ValueError("param_mask must match the flat parameter vector")

    losses = [dataset_loss(init, data)]
    if cfg.epochs == 0:
        return TrainResult(init, losses)

    rng = np.random.default_rng(cfg.seed)
    params = init.params.copy()
    velocity = np.zeros_like(params)
    n = len(data)
    model = init

    # Divergence is detected explicitly below; silence the transient overflow
    # warnings numpy would emit in the step where values first explode.
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                batch = perm[start : start + cfg.batch_size]
                loss, grad = loss_and_grad(model, data.features[batch], data.labels[batch])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, batch offset {start}"
                    )
                if cfg.weight_decay > 0.0:
                    grad = grad + cfg.weight_decay * params
                velocity = cfg.momentum * velocity - cfg.learning_rate * grad
                if param_mask is not None:
                    velocity = np.where(param_mask, velocity, 0.0)
                params = params + velocity
                if not np.all(np.isfinite(params)):
                    raise TrainingDivergedError(
                        f"non-finite parameters at epoch {epoch}, batch offset {start}"
                    )
                model = init.with_params(params)
            losses.append(dataset_loss(model, data))

    return TrainResult(model, losses)
