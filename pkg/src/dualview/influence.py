"""Influence scores through inverse-Hessian-vector products.

Two interchangeable operators provide the inverse action:

* ``WoodFisherInverse``: rank-1 recursive approximation built from
  per-sample gradients (the empirical Fisher), never materializing the
  d x d matrix.  Processing gradients g_1..g_N in sample-id order with
  H_0^{-1} = (1/damping) I and

      H_{k+1}^{-1} = H_k^{-1} - (H_k^{-1} g_k g_k^T H_k^{-1}) / (N + g_k^T H_k^{-1} g_k)

  yields the exact inverse of ``damping * I + (1/N) sum g_k g_k^T``; only the
  per-step projection vectors o_k = H_k^{-1} g_k and their scalars are kept.

* ``ExactDampedInverse``: dense (H + damping I) solve where H comes from
  central finite differences of the batch gradient; feasible for small
  models only and used as the validation oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .datasets import DatasetBundle, TargetSet
from .nn import Model, loss_and_grad, per_sample_grads

DEFAULT_DAMPING = 1e-2
EXACT_MAX_PARAMS = 2000


class NumericalError(RuntimeError):
    """A numeric routine produced non-finite values or failed its residual check."""


class WoodFisherInverse:
    """Matrix-free inverse of the damped empirical Fisher."""

    def __init__(self, gradients: np.ndarray, damping: float = DEFAULT_DAMPING):
        if damping <= 0:
            raise ValueError(f"damping must be positive, got {damping}")
        grads = np.atleast_2d(np.asarray(gradients, dtype=np.float64))
        self.damping = float(damping)
        self.n_samples = grads.shape[0]
        self.dim = grads.shape[1]
        self._factors = np.zeros_like(grads)  # row k: o_k = H_k^{-1} g_k
        self._scales = np.ones(self.n_samples)  # entry k: N + g_k^T o_k
        n = float(self.n_samples)
        for k in range(self.n_samples):
            g = grads[k]
            o = g / self.damping
            if k > 0:
                proj = self._factors[:k] @ g
                o = o - self._factors[:k].T @ (proj / self._scales[:k])
            denom = n + g @ o
            if not np.isfinite(denom) or denom <= 0:
                raise NumericalError(f"non-positive update denominator at gradient {k}")
            self._factors[k] = o
            self._scales[k] = denom
        if not np.all(np.isfinite(self._factors)):
            raise NumericalError("non-finite intermediate in the rank-1 recursion")

    @classmethod
    def from_model(
        cls, model: Model, data: DatasetBundle, damping: float = DEFAULT_DAMPING
    ) -> "WoodFisherInverse":
        """Build from per-sample gradients visited in sample-id order."""
        ordered = data.in_id_order()
        grads = per_sample_grads(model, ordered.features, ordered.labels)
        return cls(grads, damping)

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError(f"vector of length {v.shape} does not match dim {self.dim}")
        out = v / self.damping
        if self.n_samples:
            proj = self._factors @ v
            out = out - self._factors.T @ (proj / self._scales)
        if not np.all(np.isfinite(out)):
            raise NumericalError("non-finite result in inverse application")
        return out


class ExactDampedInverse:
    """Dense (H + damping I)^{-1} with H from finite differences of the gradient."""

    def __init__(
        self,
        model: Model,
        data: DatasetBundle,
        damping: float = DEFAULT_DAMPING,
        fd_step: float = 1e-5,
        residual_tol: float = 1e-6,
    ):
        if damping <= 0:
            raise ValueError(f"damping must be positive, got {damping}")
        d = model.n_params
        if d > EXACT_MAX_PARAMS:
            raise ValueError(f"{d} parameters exceeds the dense feasibility guard ({EXACT_MAX_PARAMS})")
        self.damping = float(damping)
        self.dim = d
        self._residual_tol = residual_tol
        hessian = np.empty((d, d))
        base = model.params
        for j in range(d):
            step = np.zeros(d)
            step[j] = fd_step
            _, g_plus = loss_and_grad(model.with_params(base + step), data.features, data.labels)
            _, g_minus = loss_and_grad(model.with_params(base - step), data.features, data.labels)
            hessian[:, j] = (g_plus - g_minus) / (2.0 * fd_step)
        hessian = 0.5 * (hessian + hessian.T)
        self._system = hessian + self.damping * np.eye(d)
        self._lu = scipy.linalg.lu_factor(self._system)

    @classmethod
    def from_matrix(cls, hessian: np.ndarray, damping: float) -> "ExactDampedInverse":
        """Oracle entry point for synthetic Hessians (skips finite differences)."""
        obj = cls.__new__(cls)
        obj.damping = float(damping)
        obj.dim = hessian.shape[0]
        obj._residual_tol = 1e-6
        obj._system = np.asarray(hessian, dtype=np.float64) + damping * np.eye(obj.dim)
        obj._lu = scipy.linalg.lu_factor(obj._system)
        return obj

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError(f"vector of length {v.shape} does not match dim {self.dim}")
        x = scipy.linalg.lu_solve(self._lu, v)
        norm_v = np.linalg.norm(v)
        if norm_v > 0:
            residual = np.linalg.norm(self._system @ x - v) / norm_v
            if not residual <= self._residual_tol:
                raise NumericalError(f"ill-conditioned solve: relative residual {residual:.3e}")
        return x


def woodfisher_apply(
    model: Model, data: DatasetBundle, v: np.ndarray, damping: float = DEFAULT_DAMPING
) -> np.ndarray:
    return WoodFisherInverse.from_model(model, data, damping).apply(v)


def exact_inverse_apply(
    model: Model, data: DatasetBundle, v: np.ndarray, damping: float = DEFAULT_DAMPING
) -> np.ndarray:
    return ExactDampedInverse(model, data, damping).apply(v)


def build_inverse_op(
    mode: str, model: Model, data: DatasetBundle, damping: float = DEFAULT_DAMPING
):
    if mode == "woodfisher":
        return WoodFisherInverse.from_model(model, data, damping)
    if mode == "exact":
        return ExactDampedInverse(model, data, damping)
    raise ValueError(f"unknown inverse-Hessian mode {mode!r}")


def removal_direction(model: Model, forget: DatasetBundle | None, inverse_op) -> np.ndarray:
    """Inverse-Hessian action on the summed forget-set gradient (zero if empty)."""
    if forget is None or len(forget) == 0:
        return np.zeros(inverse_op.dim)
    grads = per_sample_grads(model, forget.features, forget.labels)
    return inverse_op.apply(grads.sum(axis=0))


def influence_score(
    model: Model, forget: DatasetBundle | None, x: np.ndarray, y: int, inverse_op
) -> float:
    """Removal impact of the forget set on one test point (loss-increase direction positive)."""
    direction = removal_direction(model, forget, inverse_op)
    _, g_test = loss_and_grad(model, np.asarray(x, dtype=np.float64)[None, :], np.array([y]))
    return float(g_test @ direction)


@dataclass(frozen=True)
class InfluenceRow:
    id: int
    truth: int
    score: float


def influence_report(
    model: Model, forget: DatasetBundle, target: TargetSet, inverse_op
) -> list[InfluenceRow]:
    """One removal-impact score per target sample, tagged with membership truth.

    The shared inverse-Hessian action on the forget gradient is computed once
    and dotted against each target gradient.
    """
    if len(target) == 0:
        return []
    direction = removal_direction(model, forget, inverse_op)
    grads = per_sample_grads(model, target.features, target.labels)
    scores = grads @ direction
    return [
        InfluenceRow(id=int(target.ids[i]), truth=int(target.truth[i]), score=float(scores[i]))
        for i in range(len(target))
    ]
