"""Feed-forward classifier with a flat parameter vector and manual backprop.

The model is a plain MLP: rectifier hidden layers, probability outputs via
max-shifted normalized exponentials, mean cross-entropy loss. Everything is
float64 and every operation is a pure function of its inputs, so two calls
with the same arguments produce bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionMismatchError(ValueError):
    """Input shape does not match the model's layer dimensions."""


def param_count(layer_dims: tuple[int, ...]) -> int:
    """Number of parameters for the given layer sizes (weights plus biases)."""
    return sum(d_in * d_out + d_out for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]))


@dataclass(frozen=True)
class Model:
    """Immutable MLP: layer sizes plus one flat float64 parameter vector.

    ``params`` stores, for each layer in order, the row-major (in x out)
    weight matrix followed by the bias vector.
    """

    layer_dims: tuple[int, ...]
    params: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"layer_dims must list at least input and output sizes, got {dims}")
        params = np.ascontiguousarray(self.params, dtype=np.float64)
        expected = param_count(dims)
        if params.ndim != 1 or params.size != expected:
            raise ValueError(
                f"params has {params.size} entries, layer_dims {dims} requires {expected}"
            )
        params.setflags(write=False)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "params", params)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_params(self) -> int:
        return self.params.size

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views of the flat parameter vector as (weight, bias) pairs."""
        out = []
        offset = 0
        for d_in, d_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            w = self.params[offset : offset + d_in * d_out].reshape(d_in, d_out)
            offset += d_in * d_out
            b = self.params[offset : offset + d_out]
            offset += d_out
            out.append((w, b))
        return out

    def with_params(self, params: np.ndarray) -> "Model":
        return Model(self.layer_dims, params)


def init_model(layer_dims: tuple[int, ...] | list[int], seed: int) -> Model:
    """Fresh model with He-scaled normal weights and zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    rng = np.random.default_rng(seed)
    chunks = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w = rng.standard_normal((d_in, d_out)) * np.sqrt(2.0 / d_in)
        chunks.append(w.ravel())
        chunks.append(np.zeros(d_out))
    return Model(dims, np.concatenate(chunks))


def _check_features(model: Model, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise DimensionMismatchError(
            f"input has {x.shape[-1]} features, model expects {model.input_dim}"
        )
    if not np.all(np.isfinite(model.params)):
        raise ValueError("model parameters contain non-finite values")
    return x


def _forward_pass(model: Model, x: np.ndarray):
    """Forward through all layers; returns (activations, pre-activations, log-probs, probs).

    ``activations[i]`` is the input to layer i; log-probs come straight from
    the max-shifted logits so the loss never takes log of a rounded
    probability.
    """
    layers = model.layers()
    activations = [x]
    pre_acts = []
    a = x
    for w, b in layers[:-1]:
        z = a @ w + b
        pre_acts.append(z)
        a = np.maximum(z, 0.0)
        activations.append(a)
    w, b = layers[-1]
    logits = a @ w + b
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_norm
    probs = np.exp(log_probs)
    return activations, pre_acts, log_probs, probs


def forward_batch(model: Model, features: np.ndarray) -> np.ndarray:
    """Class-probability rows for a (n, input_dim) feature matrix."""
    x = _check_features(model, np.atleast_2d(features))
    return _forward_pass(model, x)[3]


def forward(model: Model, x: np.ndarray) -> np.ndarray:
    """Probability vector over classes for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-d feature vector, got shape {x.shape}")
    return forward_batch(model, x[None, :])[0]


def confidence(model: Model, x: np.ndarray, y: int) -> float:
    """Probability the model assigns to label ``y`` on input ``x``."""
    y = int(y)
    if not 0 <= y < model.n_classes:
        raise ValueError(f"label {y} out of range for {model.n_classes} classes")
    return float(forward(model, x)[y])


def confidence_batch(model: Model, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= model.n_classes:
        raise ValueError("labels out of range")
    probs = forward_batch(model, features)
    return probs[np.arange(len(labels)), labels]


def loss_and_grad(
    model: Model, features: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient as a flat vector."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n = features.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if labels.shape[0] != n:
        raise DimensionMismatchError(f"{n} feature rows but {labels.shape[0]} labels")
    if labels.min() < 0 or labels.max() >= model.n_classes:
        raise ValueError("labels out of range")
    x = _check_features(model, features)

    activations, pre_acts, log_probs, probs = _forward_pass(model, x)
    idx = np.arange(n)
    loss = float(-log_probs[idx, labels].mean())

    # Backward pass: softmax + cross-entropy collapses to (p - onehot) / n.
    d_logits = probs.copy()
    d_logits[idx, labels] -= 1.0
    d_logits /= n

    layers = model.layers()
    grads = [None] * len(layers)
    delta = d_logits
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw = activations[i].T @ delta
        gb = delta.sum(axis=0)
        grads[i] = (gw, gb)
        if i > 0:
            delta = (delta @ w.T) * (pre_acts[i - 1] > 0.0)

    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
    return loss, flat


def per_sample_grad(model: Model, x: np.ndarray, y: int) -> np.ndarray:
    """Gradient of the loss at a single sample; identical to a singleton batch."""
    _, grad = loss_and_grad(model, np.asarray(x, dtype=np.float64)[None, :], np.array([y]))
    return grad


def per_sample_grads(model: Model, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """All per-sample gradients as an (n, n_params) matrix.

    Vectorized over the batch; row i equals ``per_sample_grad`` on sample i
    up to float-summation order inside each matmul.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n = features.shape[0]
    if n == 0:
        return np.zeros((0, model.n_params))
    x = _check_features(model, features)

    activations, pre_acts, _, probs = _forward_pass(model, x)
    d_logits = probs.copy()
    d_logits[np.arange(n), labels] -= 1.0

    layers = model.layers()
    per_layer = [None] * len(layers)
    delta = d_logits
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw = np.einsum("bi,bj->bij", activations[i], delta)
        per_layer[i] = (gw.reshape(n, -1), delta.copy())
        if i > 0:
            delta = (delta @ w.T) * (pre_acts[i - 1] > 0.0)

    return np.concatenate([np.concatenate(pair, axis=1) for pair in per_layer], axis=1)


def accuracy(model: Model, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of samples whose argmax probability matches the label."""
    probs = forward_batch(model, features)
    return float((probs.argmax(axis=1) == np.asarray(labels)).mean())
