"""Dual-view membership inference on retained data.

Pipeline: score each sample by how much unlearning moved the correct-label
confidence (UCD), stretch the score onto the real line, fit member and
non-member Gaussians from shadow models, and classify targets by the
likelihood ratio against a fixed threshold.

Single-view confidence baselines reuse the same transform and inference so
the comparison isolates the metric.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import DatasetBundle, TargetSet, sample_shadow_membership, select_forget
from .nn import Model, confidence_batch, init_model
from .training import TrainConfig, train
from .unlearning import (
    UNLEARN_METHODS,
    unlearn_gradient_ascent,
    unlearn_influence,
    unlearn_retrain,
    unlearn_salun,
)

CLIP_EPS = 1e-6  # confidence deltas of exactly +/-1 would blow up the transform
VAR_FLOOR = 1e-12  # degenerate shadow scores must still give a usable density
DEFAULT_THRESHOLD = 1.0

METRIC_UCD = "ucd"
METRIC_CONF_ORIGINAL = "conf_o"
METRIC_CONF_UNLEARNED = "conf_u"
ATTACK_METRICS = (METRIC_UCD, METRIC_CONF_ORIGINAL, METRIC_CONF_UNLEARNED)


def derive_seed(*tags: int) -> int:
    """Stable 63-bit seed from integer tags; independent streams per run."""
    state = np.random.SeedSequence([int(t) & 0x7FFFFFFF for t in tags]).generate_state(2)
    return int((int(state[0]) << 31) ^ int(state[1])) & 0x7FFFFFFFFFFFFFFF


def ucd(model_original: Model, model_unlearned: Model, x: np.ndarray, y: int) -> float:
    """Unlearning confidence difference: confidence shift on the true label."""
    if model_original.layer_dims != model_unlearned.layer_dims:
        raise ValueError("original and unlearned models must share layer dimensions")
    deltas = ucd_batch(model_original, model_unlearned, np.asarray(x)[None, :], np.array([y]))
    return float(deltas[0])


def ucd_batch(
    model_original: Model,
    model_unlearned: Model,
    features: np.ndarray,
    labels: np.ndarray,
) -> np.ndarray:
    conf_o = confidence_batch(model_original, features, labels)
    conf_u = confidence_batch(model_unlearned, features, labels)
    return conf_u - conf_o


def log_odds(delta, clip_eps: float = CLIP_EPS):
    """log((1 + delta) / (1 - delta)): odd, strictly increasing, maps (-1, 1) onto R.

    Inputs are clipped to [-1 + clip_eps, 1 - clip_eps] first, so saturated
    confidences stay finite.
    """
    d = np.clip(np.asarray(delta, dtype=np.float64), -1.0 + clip_eps, 1.0 - clip_eps)
    out = np.log1p(d) - np.log1p(-d)
    return float(out) if np.isscalar(delta) or np.ndim(delta) == 0 else out


def confidence_score(conf) -> np.ndarray:
    """Single-model baseline score: map confidence in [0, 1] to (-1, 1), then stretch."""
    return log_odds(2.0 * np.asarray(conf, dtype=np.float64) - 1.0)


@dataclass(frozen=True)
class ShadowStats:
    """Member / non-member Gaussians fitted on transformed shadow scores."""

    mu_mem: float
    var_mem: float
    mu_non: float
    var_non: float
    n_mem: int
    n_non: int
    k_originals: int = 0
    k_unlearned_per_original: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "mu_mem": self.mu_mem,
            "var_mem": self.var_mem,
            "mu_non": self.mu_non,
            "var_non": self.var_non,
            "n_mem": self.n_mem,
            "n_non": self.n_non,
            "k_originals": self.k_originals,
            "k_unlearned_per_original": self.k_unlearned_per_original,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShadowStats":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def _mean_var_unbiased(values: np.ndarray) -> tuple[float, float]:
    # fsum makes the statistics independent of input order, bit for bit.
    mean = math.fsum(values) / values.size
    var = math.fsum((values - mean) ** 2) / (values.size - 1)
    return mean, var


def fit_gaussians(
    scores_mem, scores_non, var_floor: float = VAR_FLOOR, **meta
) -> ShadowStats:
    """Sample means and unbiased variances (floored) for the two score sets."""
    mem = np.asarray(scores_mem, dtype=np.float64)
    non = np.asarray(scores_non, dtype=np.float64)
    if mem.size < 2 or non.size < 2:
        raise ValueError(f"need at least 2 scores per class, got {mem.size} and {non.size}")
    mu_mem, var_mem = _mean_var_unbiased(mem)
    mu_non, var_non = _mean_var_unbiased(non)
    return ShadowStats(
        mu_mem=mu_mem,
        var_mem=max(var_mem, var_floor),
        mu_non=mu_non,
        var_non=max(var_non, var_floor),
        n_mem=int(mem.size),
        n_non=int(non.size),
        **meta,
    )


def normal_logpdf(x, mu: float, var: float):
    x = np.asarray(x, dtype=np.float64)
    return -0.5 * (np.log(2.0 * math.pi * var) + (x - mu) ** 2 / var)


def log_likelihood_ratio(alpha, stats: ShadowStats):
    return normal_logpdf(alpha, stats.mu_mem, stats.var_mem) - normal_logpdf(
        alpha, stats.mu_non, stats.var_non
    )


def likelihood_ratio(alpha, stats: ShadowStats):
    """Member-over-non-member density ratio, computed in log space."""
    out = np.exp(log_likelihood_ratio(alpha, stats))
    return float(out) if np.ndim(alpha) == 0 else out


def decide(ratio, threshold: float = DEFAULT_THRESHOLD):
    """Membership bit: 1 iff the likelihood ratio strictly exceeds the threshold."""
    if np.ndim(ratio) == 0:
        return int(ratio > threshold)
    return (np.asarray(ratio) > threshold).astype(np.int64)


@dataclass(frozen=True)
class AttackVerdict:
    id: int
    alpha: float
    ratio: float
    decision: int
    truth: int | None = None


def attack(
    target: TargetSet,
    model_original: Model,
    model_unlearned: Model,
    stats: ShadowStats,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[AttackVerdict]:
    """Score and classify every target sample via the dual-view metric."""
    deltas = ucd_batch(model_original, model_unlearned, target.features, target.labels)
    alphas = log_odds(deltas)
    ratios = likelihood_ratio(alphas, stats)
    decisions = decide(ratios, threshold)
    return [
        AttackVerdict(
            id=int(target.ids[i]),
            alpha=float(alphas[i]),
            ratio=float(ratios[i]),
            decision=int(decisions[i]),
            truth=int(target.truth[i]),
        )
        for i in range(len(target))
    ]


def baseline_conf(
    model: Model,
    target: TargetSet,
    stats: ShadowStats,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[AttackVerdict]:
    """Single-view baseline: same inference, score from one model's confidence."""
    conf = confidence_batch(model, target.features, target.labels)
    alphas = confidence_score(conf)
    ratios = likelihood_ratio(alphas, stats)
    decisions = decide(ratios, threshold)
    return [
        AttackVerdict(
            id=int(target.ids[i]),
            alpha=float(alphas[i]),
            ratio=float(ratios[i]),
            decision=int(decisions[i]),
            truth=int(target.truth[i]),
        )
        for i in range(len(target))
    ]


@dataclass(frozen=True)
class ThresholdRule:
    """Score cutoff fitted on shadow scores; ``flipped`` marks a <=-direction rule."""

    cutoff: float
    flipped: bool

    def apply(self, scores) -> np.ndarray:
        scores = np.asarray(scores, dtype=np.float64)
        if self.flipped:
            return (scores <= self.cutoff).astype(np.int64)
        return (scores > self.cutoff).astype(np.int64)


def fit_threshold(scores, truth, resolution: int = 512) -> ThresholdRule:
    """Pick the balanced-accuracy-maximizing cutoff (either direction) on shadow data."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if scores.size == 0 or truth.size != scores.size:
        raise ValueError("scores and truth must be non-empty and aligned")
    uniq = np.unique(scores)
    candidates = np.concatenate([[uniq[0] - 1.0], (uniq[:-1] + uniq[1:]) / 2.0, [uniq[-1] + 1.0]])
    if candidates.size > resolution:
        candidates = np.quantile(candidates, np.linspace(0.0, 1.0, resolution))
    is_mem = truth == 1
    n_mem = max(int(is_mem.sum()), 1)
    n_non = max(int((~is_mem).sum()), 1)
    best = None
    for cutoff in candidates:
        pred = scores > cutoff
        tpr = float((pred & is_mem).sum()) / n_mem
        tnr = float((~pred & ~is_mem).sum()) / n_non
        for flipped, bal in ((False, (tpr + tnr) / 2.0), (True, 1.0 - (tpr + tnr) / 2.0)):
            if best is None or bal > best[0]:
                best = (bal, ThresholdRule(cutoff=float(cutoff), flipped=flipped))
    return best[1]


def baseline_threshold(
    shadow_scores,
    shadow_truth,
    target: TargetSet,
    target_scores,
    resolution: int = 512,
) -> list[AttackVerdict]:
    """Threshold attack: cutoff chosen on shadow scores only, then applied to targets."""
    rule = fit_threshold(shadow_scores, shadow_truth, resolution)
    target_scores = np.asarray(target_scores, dtype=np.float64)
    decisions = rule.apply(target_scores)
    return [
        AttackVerdict(
            id=int(target.ids[i]),
            alpha=float(target_scores[i]),
            ratio=float("nan"),
            decision=int(decisions[i]),
            truth=int(target.truth[i]),
        )
        for i in range(len(target))
    ]


@dataclass(frozen=True)
class UnlearnSettings:
    """Method plus hyperparameters applied to shadow and target models alike."""

    method: str = "retrain"
    ga_steps: int = 5
    ga_learning_rate: float = 0.01
    iu_damping: float = 1e-2
    salun_fraction: float = 0.5
    salun_epochs: int = 2

    def __post_init__(self):
        if self.method not in UNLEARN_METHODS:
            raise ValueError(f"method must be one of {UNLEARN_METHODS}, got {self.method!r}")


def apply_unlearning(
    settings: UnlearnSettings,
    init: Model,
    model: Model,
    train_data: DatasetBundle,
    forget: DatasetBundle,
    train_cfg: TrainConfig,
    seed: int,
) -> Model:
    """Dispatch one unlearning run; ``seed`` feeds methods with internal randomness."""
    if settings.method == "retrain":
        return unlearn_retrain(init, train_data.drop_ids(forget.ids), train_cfg)
    if settings.method == "gradient_ascent":
        return unlearn_gradient_ascent(
            model, forget, steps=settings.ga_steps, learning_rate=settings.ga_learning_rate
        )
    if settings.method == "influence":
        return unlearn_influence(model, train_data, forget, damping=settings.iu_damping)
    if settings.method == "salun":
        finetune = replace(train_cfg, epochs=settings.salun_epochs, seed=seed)
        return unlearn_salun(
            model, train_data, forget, saliency_fraction=settings.salun_fraction, finetune_cfg=finetune
        )
    if settings.method == "none":
        return model
    raise ValueError(f"unknown unlearning method {settings.method!r}")


@dataclass
class ShadowScoreBank:
    """Transformed shadow scores per attack metric, split by membership."""

    mem: dict[str, list[float]] = field(default_factory=lambda: {m: [] for m in ATTACK_METRICS})
    non: dict[str, list[float]] = field(default_factory=lambda: {m: [] for m in ATTACK_METRICS})

    def extend(self, metric: str, mem_scores, non_scores) -> None:
        self.mem[metric].extend(float(s) for s in mem_scores)
        self.non[metric].extend(float(s) for s in non_scores)

    def merge(self, other: "ShadowScoreBank") -> None:
        for metric in ATTACK_METRICS:
            self.mem[metric].extend(other.mem[metric])
            self.non[metric].extend(other.non[metric])


@dataclass(frozen=True)
class ShadowFit:
    """Fitted stats per metric plus the raw score bank for threshold baselines."""

    stats: dict[str, ShadowStats]
    bank: ShadowScoreBank

    def to_dict(self) -> dict:
        return {metric: s.to_dict() for metric, s in self.stats.items()}


@dataclass(frozen=True)
class ShadowJob:
    shadow_train: DatasetBundle
    shadow_val: DatasetBundle
    layer_dims: tuple[int, ...]
    train_cfg: TrainConfig
    unlearn: UnlearnSettings
    k_unlearned: int
    forget_ratio: float
    n_members: int
    n_nonmembers: int
    base_seed: int
    index: int
    share_forget_draws: bool = False


def _run_one_shadow(job: ShadowJob) -> ShadowScoreBank:
    """Train one shadow original, derive its unlearned variants, collect scores."""
    k = job.index
    members, nonmembers = sample_shadow_membership(
        job.shadow_train,
        job.shadow_val,
        job.n_members,
        job.n_nonmembers,
        seed=derive_seed(job.base_seed, 11, k),
    )
    init = init_model(job.layer_dims, seed=derive_seed(job.base_seed, 12, k))
    cfg = job.train_cfg.with_seed(derive_seed(job.base_seed, 13, k))
    original = train(init, members, cfg).model

    bank = ShadowScoreBank()
    conf_o_mem_all = confidence_batch(original, members.features, members.labels)
    conf_o_non = confidence_score(
        confidence_batch(original, nonmembers.features, nonmembers.labels)
    )
    for j in range(job.k_unlearned):
        draw = 0 if job.share_forget_draws else j
        forget, retained = select_forget(
            members, job.forget_ratio, seed=derive_seed(job.base_seed, 14, k, draw)
        )
        unlearned = apply_unlearning(
            job.unlearn,
            init=init,
            model=original,
            train_data=members,
            forget=forget,
            train_cfg=cfg,
            seed=derive_seed(job.base_seed, 15, k, draw),
        )
        keep = ~np.isin(members.ids, forget.ids)
        # Members here are the *retained* shadow samples: the attack targets
        # data that survived unlearning, so the fit must mirror that.
        mem_deltas = ucd_batch(original, unlearned, retained.features, retained.labels)
        non_deltas = ucd_batch(original, unlearned, nonmembers.features, nonmembers.labels)
        bank.extend(METRIC_UCD, log_odds(mem_deltas), log_odds(non_deltas))
        bank.extend(METRIC_CONF_ORIGINAL, confidence_score(conf_o_mem_all[keep]), conf_o_non)
        conf_u_mem = confidence_batch(unlearned, retained.features, retained.labels)
        conf_u_non = confidence_batch(unlearned, nonmembers.features, nonmembers.labels)
        bank.extend(METRIC_CONF_UNLEARNED, confidence_score(conf_u_mem), confidence_score(conf_u_non))
    return bank


def run_shadow_pipeline(
    shadow_train: DatasetBundle,
    shadow_val: DatasetBundle,
    layer_dims: tuple[int, ...],
    train_cfg: TrainConfig,
    unlearn: UnlearnSettings,
    k_originals: int,
    k_unlearned: int,
    forget_ratio: float,
    base_seed: int,
    n_members: int | None = None,
    n_nonmembers: int | None = None,
    share_forget_draws: bool = False,
    workers: int = 1,
) -> ShadowFit:
    """Train ``k_originals`` shadow models with ``k_unlearned`` variants each and fit Gaussians.

    Shadow runs use RNG streams derived from (base_seed, run index), so the
    result is identical whether they execute serially or in parallel.
    """
    if k_originals < 1 or k_unlearned < 1:
        raise ValueError("need at least one shadow original and one unlearned variant")
    if n_members is None:
        n_members = max(2, (3 * len(shadow_train)) // 4)
    if n_nonmembers is None:
        n_nonmembers = max(2, (3 * len(shadow_val)) // 4)
    jobs = [
        ShadowJob(
            shadow_train=shadow_train,
            shadow_val=shadow_val,
            layer_dims=tuple(layer_dims),
            train_cfg=train_cfg,
            unlearn=unlearn,
            k_unlearned=k_unlearned,
            forget_ratio=forget_ratio,
            n_members=n_members,
            n_nonmembers=n_nonmembers,
            base_seed=base_seed,
            index=k,
            share_forget_draws=share_forget_draws,
        )
        for k in range(k_originals)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            banks = list(pool.map(_run_one_shadow, jobs))
    else:
        banks = [_run_one_shadow(job) for job in jobs]

    bank = ShadowScoreBank()
    for b in banks:
        bank.merge(b)
    meta = dict(k_originals=k_originals, k_unlearned_per_original=k_unlearned, seed=base_seed)
    stats = {
        metric: fit_gaussians(bank.mem[metric], bank.non[metric], **meta)
        for metric in ATTACK_METRICS
    }
    return ShadowFit(stats=stats, bank=bank)
