"""Empirical dual-view knowledge gain.

Quantifies how much membership information the behavioral change between
the two models carries: a histogram plug-in estimate of the mutual
information between the membership bit and the per-sample behavioral impact,
plus a two-sample Kolmogorov-Smirnov divergence check. Zero gain should be
observed exactly when the impact distribution is membership-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .nn import Model, confidence_batch, forward_batch

GAIN_MODES = ("abs_ucd", "cosine")
MIN_SAMPLES = 30


def delta_behavior(
    model_original: Model, model_unlearned: Model, x: np.ndarray, y: int, mode: str = "abs_ucd"
) -> float:
    """Behavioral impact of unlearning on one sample: 1 minus a similarity."""
    out = delta_behavior_batch(
        model_original, model_unlearned, np.asarray(x)[None, :], np.array([y]), mode
    )
    return float(out[0])


def delta_behavior_batch(
    model_original: Model,
    model_unlearned: Model,
    features: np.ndarray,
    labels: np.ndarray,
    mode: str = "abs_ucd",
) -> np.ndarray:
    if mode == "abs_ucd":
        conf_o = confidence_batch(model_original, features, labels)
        conf_u = confidence_batch(model_unlearned, features, labels)
        return np.abs(conf_u - conf_o)
    if mode == "cosine":
        p_o = forward_batch(model_original, features)
        p_u = forward_batch(model_unlearned, features)
        norms = np.linalg.norm(p_o, axis=1) * np.linalg.norm(p_u, axis=1)
        if np.any(norms == 0):  # cannot happen for simplex outputs, guarded anyway
            raise ValueError("zero-norm probability vector in cosine similarity")
        return 1.0 - (p_o * p_u).sum(axis=1) / norms
    raise ValueError(f"mode must be one of {GAIN_MODES}, got {mode!r}")


@dataclass(frozen=True)
class GainEstimate:
    mi_bits: float  # plug-in I(membership; impact), Miller-Madow corrected, clipped at 0
    ks_stat: float
    p_value: float
    bin_count: int
    n_members: int
    n_nonmembers: int

    def to_dict(self) -> dict:
        return {
            "mi_bits": self.mi_bits,
            "ks_stat": self.ks_stat,
            "p_value": self.p_value,
            "bin_count": self.bin_count,
            "n_members": self.n_members,
            "n_nonmembers": self.n_nonmembers,
        }


def _histogram_mi_bits(delta_members: np.ndarray, delta_nonmembers: np.ndarray, bins: int) -> float:
    pooled_lo = min(delta_members.min(), delta_nonmembers.min())
    pooled_hi = max(delta_members.max(), delta_nonmembers.max())
    if pooled_hi <= pooled_lo:  # all impacts identical: membership carries nothing
        return 0.0
    edges = np.linspace(pooled_lo, pooled_hi, bins + 1)
    counts = np.stack(
        [
            np.histogram(delta_members, bins=edges)[0],
            np.histogram(delta_nonmembers, bins=edges)[0],
        ]
    ).astype(np.float64)
    n = counts.sum()
    joint = counts / n
    p_class = joint.sum(axis=1, keepdims=True)
    p_bin = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = float((joint[nz] * np.log2(joint[nz] / (p_class @ p_bin)[nz])).sum())
    # Miller-Madow: correct each entropy term by (occupied cells - 1) / (2 N ln 2).
    k_joint = int((counts > 0).sum())
    k_class = int((counts.sum(axis=1) > 0).sum())
    k_bin = int((counts.sum(axis=0) > 0).sum())
    mi += ((k_class - 1) + (k_bin - 1) - (k_joint - 1)) / (2.0 * n * math.log(2.0))
    return mi


def estimate_gain(
    delta_members, delta_nonmembers, bin_count: int = 32
) -> GainEstimate:
    """Mutual-information and divergence statistics of impact conditioned on membership.

    Equal-width bins over the pooled range; the class prior comes from the
    sample proportions. The KS p-value tests whether the two conditional
    impact distributions differ at all.
    """
    mem = np.asarray(delta_members, dtype=np.float64)
    non = np.asarray(delta_nonmembers, dtype=np.float64)
    if mem.size < MIN_SAMPLES or non.size < MIN_SAMPLES:
        raise ValueError(
            f"need at least {MIN_SAMPLES} impacts per class, got {mem.size} and {non.size}"
        )
    if bin_count < 2:
        raise ValueError(f"bin_count must be at least 2, got {bin_count}")
    mi = max(_histogram_mi_bits(mem, non, bin_count), 0.0)
    ks = scipy.stats.ks_2samp(mem, non)
    return GainEstimate(
        mi_bits=mi,
        ks_stat=float(ks.statistic),
        p_value=float(ks.pvalue),
        bin_count=bin_count,
        n_members=int(mem.size),
        n_nonmembers=int(non.size),
    )


@dataclass(frozen=True)
class DensityTable:
    """Shared-binning histogram of a score, split by membership truth."""

    edges: np.ndarray  # bin_count + 1 edges
    counts_members: np.ndarray
    counts_nonmembers: np.ndarray

    def rows(self) -> list[tuple[float, float, int, int]]:
        return [
            (
                float(self.edges[i]),
                float(self.edges[i + 1]),
                int(self.counts_members[i]),
                int(self.counts_nonmembers[i]),
            )
            for i in range(len(self.counts_members))
        ]


def density_export(values, truth, bin_count: int = 32) -> DensityTable:
    """Per-bin member/non-member counts over one shared equal-width binning."""
    values = np.asarray(values, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if values.size == 0 or values.shape != truth.shape:
        raise ValueError("values and truth must be non-empty and aligned")
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        hi = lo + 1.0  # single point: one occupied bin over a unit span
    edges = np.linspace(lo, hi, bin_count + 1)
    counts_mem = np.histogram(values[truth == 1], bins=edges)[0]
    counts_non = np.histogram(values[truth == 0], bins=edges)[0]
    return DensityTable(edges=edges, counts_members=counts_mem, counts_nonmembers=counts_non)
