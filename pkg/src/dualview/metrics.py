"""Attack evaluation: balanced accuracy, ROC/AUC, and TPR at low FPR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _split_scores(scores, truth) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth must be aligned")
    members = scores[truth == 1]
    nonmembers = scores[truth == 0]
    if members.size == 0 or nonmembers.size == 0:
        raise ValueError("both membership classes must be present")
    return members, nonmembers


def balanced_accuracy(decisions, truth) -> float:
    """(TPR + TNR) / 2 over 0/1 decisions."""
    pred_mem, pred_non = _split_scores(decisions, truth)
    tpr = float((pred_mem == 1).mean())
    tnr = float((pred_non == 0).mean())
    return (tpr + tnr) / 2.0


def roc_auc(scores, truth) -> float:
    """Rank statistic: P(member score > non-member score) + half the tie mass.

    Computed via midranks, which matches the brute-force pairwise count
    exactly (both reduce to the same integer-and-halves arithmetic).
    """
    members, nonmembers = _split_scores(scores, truth)
    n_mem, n_non = members.size, nonmembers.size
    combined = np.concatenate([members, nonmembers])
    order = np.argsort(combined, kind="stable")
    ranks = np.empty(combined.size, dtype=np.float64)
    sorted_vals = combined[order]
    i = 0
    while i < combined.size:
        j = i
        while j + 1 < combined.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_members = float(ranks[:n_mem].sum())
    return (rank_sum_members - n_mem * (n_mem + 1) / 2.0) / (n_mem * n_non)


def roc_points(scores, truth) -> list[tuple[float, float]]:
    """(FPR, TPR) staircase from threshold ``> t`` sweeps, monotone in both axes."""
    members, nonmembers = _split_scores(scores, truth)
    thresholds = np.unique(np.concatenate([members, nonmembers]))[::-1]
    points = [(0.0, 0.0)]
    for t in thresholds:
        fpr = float((nonmembers > t).mean())
        tpr = float((members > t).mean())
        points.append((fpr, tpr))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


@dataclass(frozen=True)
class TprAtFpr:
    fpr_target: float
    tpr: float
    achieved_fpr: float
    reachable: bool  # False when the target is below the 1/n_nonmembers granularity


def tpr_at_fpr(scores, truth, fpr_target: float) -> TprAtFpr:
    """TPR at the loosest threshold whose empirical FPR stays within the target."""
    if not 0.0 <= fpr_target <= 1.0:
        raise ValueError(f"fpr_target must lie in [0, 1], got {fpr_target}")
    members, nonmembers = _split_scores(scores, truth)
    reachable = fpr_target >= 1.0 / nonmembers.size
    best_tpr = 0.0
    best_fpr = 0.0
    for t in np.unique(np.concatenate([members, nonmembers]))[::-1]:
        fpr = float((nonmembers > t).mean())
        if fpr > fpr_target:
            break
        best_tpr = float((members > t).mean())
        best_fpr = fpr
    return TprAtFpr(fpr_target=fpr_target, tpr=best_tpr, achieved_fpr=best_fpr, reachable=reachable)


@dataclass(frozen=True)
class MetricsReport:
    balanced_accuracy: float
    auc: float
    tpr_at_fpr: list[TprAtFpr]
    roc: list[tuple[float, float]]
    n_members: int
    n_nonmembers: int

    def to_dict(self) -> dict:
        return {
            "balanced_accuracy": self.balanced_accuracy,
            "auc": self.auc,
            "tpr_at_fpr": [
                {
                    "fpr_target": t.fpr_target,
                    "tpr": t.tpr,
                    "achieved_fpr": t.achieved_fpr,
                    "reachable": t.reachable,
                }
                for t in self.tpr_at_fpr
            ],
            "n_members": self.n_members,
            "n_nonmembers": self.n_nonmembers,
        }


def evaluate_verdicts(verdicts, fpr_targets=(0.001, 0.01)) -> MetricsReport:
    """Full metric set for a verdict list; ranking uses the likelihood ratio."""
    truth = np.array([v.truth for v in verdicts], dtype=np.int64)
    decisions = np.array([v.decision for v in verdicts], dtype=np.int64)
    scores = np.array([v.ratio for v in verdicts], dtype=np.float64)
    if np.isnan(scores).any():  # threshold baseline carries no ratio
        scores = np.array([v.alpha for v in verdicts], dtype=np.float64)
    return MetricsReport(
        balanced_accuracy=balanced_accuracy(decisions, truth),
        auc=roc_auc(scores, truth),
        tpr_at_fpr=[tpr_at_fpr(scores, truth, f) for f in fpr_targets],
        roc=roc_points(scores, truth),
        n_members=int((truth == 1).sum()),
        n_nonmembers=int((truth == 0).sum()),
    )
