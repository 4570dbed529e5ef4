"""Four unlearning procedures behind one dispatch surface.

``retrain`` is exact (train from the same init on the retain set); the
other three are approximate edits of the original parameters. ``none`` is
an identity pass-through kept as an experimental control.
"""

from __future__ import annotations

import numpy as np

from .datasets import DatasetBundle
from .influence import DEFAULT_DAMPING, WoodFisherInverse, removal_direction
from .nn import Model, loss_and_grad
from .training import TrainConfig, TrainingDivergedError, train

UNLEARN_METHODS = ("retrain", "gradient_ascent", "influence", "salun", "none")


def unlearn_retrain(init: Model, retain: DatasetBundle, cfg: TrainConfig) -> Model:
    """Retrain from the original init and settings on the retain set only."""
    return train(init, retain, cfg).model


def unlearn_gradient_ascent(
    model: Model, forget: DatasetBundle, steps: int = 5, learning_rate: float = 0.01
) -> Model:
    """Full-batch ascent on the mean forget-set loss, no momentum."""
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    if learning_rate <= 0:
        raise ValueError(f"learning_rate must be positive, got {learning_rate}")
    params = model.params
    current = model
    for step in range(steps):
        loss, grad = loss_and_grad(current, forget.features, forget.labels)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite forget loss at ascent step {step}")
        params = params + learning_rate * grad
        if not np.all(np.isfinite(params)):
            raise TrainingDivergedError(f"non-finite parameters at ascent step {step}")
        current = model.with_params(params)
    return current


def unlearn_influence(
    model: Model,
    train_data: DatasetBundle,
    forget: DatasetBundle,
    damping: float = DEFAULT_DAMPING,
    inverse_op=None,
) -> Model:
    """One Newton-style group-removal step.

    Adds ``(1/N) * Hinv * sum of forget gradients`` to the parameters, with
    the inverse Hessian approximated by the damped empirical Fisher over the
    full training set (an exact operator can be substituted for validation).
    """
    if inverse_op is None:
        inverse_op = WoodFisherInverse.from_model(model, train_data, damping)
    update = removal_direction(model, forget, inverse_op) / len(train_data)
    if not np.all(np.isfinite(update)):
        raise TrainingDivergedError("non-finite influence-unlearning update")
    return model.with_params(model.params + update)


def salun_mask(model: Model, forget: DatasetBundle, saliency_fraction: float) -> np.ndarray:
    """Boolean mask of the top-saliency parameters (|forget-loss gradient|)."""
    if not 0.0 < saliency_fraction <= 1.0:
        raise ValueError(f"saliency_fraction must lie in (0, 1], got {saliency_fraction}")
    _, grad = loss_and_grad(model, forget.features, forget.labels)
    k = int(np.floor(saliency_fraction * model.n_params + 0.5))
    if k < 1:
        raise ValueError(f"saliency_fraction {saliency_fraction} selects an empty mask")
    order = np.argsort(-np.abs(grad), kind="stable")
    mask = np.zeros(model.n_params, dtype=bool)
    mask[order[:k]] = True
    return mask


def unlearn_salun(
    model: Model,
    train_data: DatasetBundle,
    forget: DatasetBundle,
    saliency_fraction: float,
    finetune_cfg: TrainConfig,
) -> Model:
    """Saliency-masked fine-tuning with randomized forget labels.

    The forget samples get labels redrawn uniformly over the *other* classes
    (guaranteed forgetting pressure), the retain samples keep their labels,
    and only the top-saliency parameters are updated.
    """
    mask = salun_mask(model, forget, saliency_fraction)
    retain = train_data.drop_ids(forget.ids)
    rng = np.random.default_rng(finetune_cfg.seed)
    n_classes = model.n_classes
    shift = rng.integers(1, n_classes, size=len(forget))
    random_labels = (forget.labels + shift) % n_classes
    mixed = DatasetBundle(
        features=np.concatenate([forget.features, retain.features]),
        labels=np.concatenate([random_labels, retain.labels]),
        ids=np.concatenate([forget.ids, retain.ids]),
    )
    return train(model, mixed, finetune_cfg, param_mask=mask).model
