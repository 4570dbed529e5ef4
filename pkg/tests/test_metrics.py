"""Metric tests: oracle-checked balanced accuracy, AUC, and TPR@FPR."""

import numpy as np
import pytest

from dualview.attack import AttackVerdict
from dualview.metrics import (
    balanced_accuracy,
    evaluate_verdicts,
    roc_auc,
    roc_points,
    tpr_at_fpr,
)


def test_balanced_accuracy_all_correct():
    truth = np.array([1, 1, 0, 0])
    assert balanced_accuracy(truth, truth) == 1.0


def test_balanced_accuracy_predict_all_member():
    truth = np.concatenate([np.ones(50), np.zeros(50)])
    assert balanced_accuracy(np.ones(100), truth) == 0.5


def test_balanced_accuracy_direct_arithmetic_on_large_fixture():
    # 500 members with TPR 0.8, 500 non-members with TNR 0.6 -> 0.7.
    truth = np.concatenate([np.ones(500), np.zeros(500)])
    decisions = np.concatenate(
        [np.ones(400), np.zeros(100), np.zeros(300), np.ones(200)]
    )
    assert balanced_accuracy(decisions, truth) == pytest.approx(0.7, abs=1e-12)


def test_balanced_accuracy_single_class_rejected():
    with pytest.raises(ValueError, match="both membership classes"):
        balanced_accuracy(np.ones(5), np.ones(5))


def brute_force_auc(scores, truth):
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth)
    members = scores[truth == 1]
    nonmembers = scores[truth == 0]
    wins = ties = 0
    for m in members:
        for n in nonmembers:
            if m > n:
                wins += 1
            elif m == n:
                ties += 1
    return (wins + 0.5 * ties) / (len(members) * len(nonmembers))


def test_auc_perfectly_separated():
    scores = np.concatenate([np.full(10, 2.0), np.full(10, 1.0)])
    truth = np.concatenate([np.ones(10), np.zeros(10)])
    assert roc_auc(scores, truth) == 1.0


def test_auc_small_example_three_quarters():
    scores = np.array([0.9, 0.8, 0.7, 0.85])
    truth = np.array([1, 1, 0, 0])
    assert roc_auc(scores, truth) == brute_force_auc(scores, truth) == 0.75


def test_auc_all_ties_half():
    scores = np.full(20, 1.5)
    truth = np.concatenate([np.ones(10), np.zeros(10)])
    assert roc_auc(scores, truth) == 0.5


def test_auc_matches_brute_force_exactly_up_to_thousand():
    rng = np.random.default_rng(0)
    for n, tie_prob in [(50, 0.0), (200, 0.3), (1000, 0.1)]:
        scores = rng.normal(size=n)
        tie_mask = rng.random(n) < tie_prob
        scores[tie_mask] = np.round(scores[tie_mask], 1)  # force ties
        truth = (rng.random(n) < 0.5).astype(int)
        if truth.sum() in (0, n):
            truth[0] = 1 - truth[0]
        assert roc_auc(scores, truth) == brute_force_auc(scores, truth)


def test_tpr_at_fpr_separated_scores():
    scores = np.concatenate([np.full(10, 2.0), np.full(10, 1.0)])
    truth = np.concatenate([np.ones(10), np.zeros(10)])
    for target in (0.0, 0.001, 0.5, 1.0):
        assert tpr_at_fpr(scores, truth, target).tpr == 1.0


def test_tpr_at_fpr_zero_target_with_overlap():
    # Threshold must sit above every non-member score.
    scores = np.array([3.0, 2.0, 1.5, 2.5, 1.0])
    truth = np.array([1, 1, 1, 0, 0])
    result = tpr_at_fpr(scores, truth, 0.0)
    assert result.achieved_fpr == 0.0
    assert result.tpr == pytest.approx(1.0 / 3.0)


def brute_force_tpr_at_fpr(scores, truth, fpr_target):
    members = scores[truth == 1]
    nonmembers = scores[truth == 0]
    best = 0.0
    for t in np.unique(scores):
        fpr = (nonmembers > t).mean()
        if fpr <= fpr_target:
            best = max(best, (members > t).mean())
    return best


def test_tpr_at_fpr_matches_sweep_oracle():
    rng = np.random.default_rng(1)
    scores = rng.normal(size=200)
    truth = (rng.random(200) < 0.5).astype(int)
    for target in (0.0, 0.01, 0.05, 0.1, 0.5):
        assert tpr_at_fpr(scores, truth, target).tpr == brute_force_tpr_at_fpr(
            scores, truth, target
        )


def test_tpr_at_fpr_monotone_in_target():
    rng = np.random.default_rng(2)
    scores = rng.normal(size=300)
    truth = (rng.random(300) < 0.5).astype(int)
    targets = np.linspace(0, 1, 21)
    tprs = [tpr_at_fpr(scores, truth, t).tpr for t in targets]
    assert all(a <= b + 1e-12 for a, b in zip(tprs, tprs[1:]))


def test_tpr_at_fpr_unreachable_flag():
    scores = np.concatenate([np.full(5, 1.0), np.full(10, 0.0)])
    truth = np.concatenate([np.ones(5), np.zeros(10)])
    assert not tpr_at_fpr(scores, truth, 0.001).reachable  # 1/10 > 0.001
    assert tpr_at_fpr(scores, truth, 0.1).reachable


def test_roc_points_monotone_and_covering():
    rng = np.random.default_rng(3)
    scores = rng.normal(size=100)
    truth = (rng.random(100) < 0.5).astype(int)
    pts = roc_points(scores, truth)
    assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)
    fprs = [p[0] for p in pts]
    tprs = [p[1] for p in pts]
    assert all(a <= b for a, b in zip(fprs, fprs[1:]))
    assert all(a <= b for a, b in zip(tprs, tprs[1:]))


def make_verdicts(scores, decisions, truth):
    return [
        AttackVerdict(id=i, alpha=float(s), ratio=float(s), decision=int(d), truth=int(t))
        for i, (s, d, t) in enumerate(zip(scores, decisions, truth))
    ]


def test_evaluate_verdicts_report():
    rng = np.random.default_rng(4)
    scores = np.concatenate([rng.normal(1, 1, 80), rng.normal(0, 1, 120)])
    truth = np.concatenate([np.ones(80), np.zeros(120)])
    decisions = (scores > 0.5).astype(int)
    report = evaluate_verdicts(make_verdicts(scores, decisions, truth), fpr_targets=(0.01, 0.1))
    assert report.n_members == 80 and report.n_nonmembers == 120
    assert report.balanced_accuracy == balanced_accuracy(decisions, truth)
    assert report.auc == roc_auc(scores, truth)
    assert [t.fpr_target for t in report.tpr_at_fpr] == [0.01, 0.1]
    d = report.to_dict()
    assert set(d) >= {"balanced_accuracy", "auc", "tpr_at_fpr", "n_members", "n_nonmembers"}
