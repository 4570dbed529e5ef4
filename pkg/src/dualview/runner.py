"""Experiment orchestration: seeded pipelines producing persistable artifacts.

Every command assembles its outputs in memory (``RunOutput``) so results are
pure functions of the config; writing to disk is a separate, single-writer
step. All derived randomness comes from ``derive_seed(base_seed, tag, ...)``
so reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attack as attack_mod
from .attack import (
    METRIC_CONF_ORIGINAL,
    METRIC_CONF_UNLEARNED,
    METRIC_UCD,
    ShadowFit,
    ShadowScoreBank,
    ShadowStats,
    UnlearnSettings,
    baseline_conf,
    baseline_threshold,
    derive_seed,
    log_odds,
    run_shadow_pipeline,
    ucd_batch,
)
from .checkpoint import CheckpointMeta, checkpoint_bytes, load_checkpoint
from .config import TOOL_VERSION, ExperimentConfig
from .datasets import (
    DatasetBundle,
    SplitSpec,
    Splits,
    TargetSet,
    build_target_set,
    gen_blobs,
    load_idx,
    select_forget,
    split_dataset,
)
from .gain import delta_behavior_batch, density_export, estimate_gain
from .influence import WoodFisherInverse, influence_report
from .metrics import evaluate_verdicts
from .nn import Model, accuracy, init_model
from .training import TrainConfig, TrainResult, train


@dataclass(frozen=True)
class Artifact:
    relpath: str
    content: bytes

    @classmethod
    def text(cls, relpath: str, text: str) -> "Artifact":
        return cls(relpath, text.encode("utf-8"))


@dataclass
class RunOutput:
    report: dict
    artifacts: list[Artifact] = field(default_factory=list)


def write_outputs(output_dir: str | Path, run: RunOutput) -> list[str]:
    """Persist all artifacts under the output directory; returns written paths."""
    base = Path(output_dir)
    written = []
    for artifact in run.artifacts:
        path = base / artifact.relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(artifact.content)
        written.append(str(path))
    return written


def _train_cfg(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    t = cfg.train
    return TrainConfig(
        learning_rate=t.learning_rate,
        momentum=t.momentum,
        batch_size=t.batch_size,
        epochs=t.epochs,
        seed=seed,
        weight_decay=t.weight_decay,
    )


def _unlearn_settings(cfg: ExperimentConfig) -> UnlearnSettings:
    u = cfg.unlearn
    return UnlearnSettings(
        method=u.method,
        ga_steps=u.ga_steps,
        ga_learning_rate=u.ga_learning_rate,
        iu_damping=u.iu_damping,
        salun_fraction=u.salun_fraction,
        salun_epochs=u.salun_epochs,
    )


def build_dataset(cfg: ExperimentConfig) -> DatasetBundle:
    ds = cfg.dataset
    if ds.kind == "synthetic":
        return gen_blobs(
            classes=ds.classes,
            dim=ds.dim,
            per_class=ds.per_class,
            spread=ds.spread,
            seed=derive_seed(cfg.base_seed, 1),
        )
    return load_idx(ds.images_path, ds.labels_path)


@dataclass(frozen=True)
class Pipeline:
    """Shared data/model context derived deterministically from one config."""

    cfg: ExperimentConfig
    bundle: DatasetBundle
    splits: Splits
    layer_dims: tuple[int, ...]
    init: Model
    train_cfg: TrainConfig

    @classmethod
    def prepare(cls, cfg: ExperimentConfig) -> "Pipeline":
        bundle = build_dataset(cfg)
        split_spec = SplitSpec(
            train=cfg.split.train,
            val=cfg.split.val,
            shadow_train=cfg.split.shadow_train,
            shadow_val=cfg.split.shadow_val,
        )
        splits = split_dataset(bundle, split_spec, seed=derive_seed(cfg.base_seed, 2))
        layer_dims = (bundle.dim, *cfg.model.hidden, bundle.n_classes)
        init = init_model(layer_dims, seed=derive_seed(cfg.base_seed, 3))
        return cls(
            cfg=cfg,
            bundle=bundle,
            splits=splits,
            layer_dims=layer_dims,
            init=init,
            train_cfg=_train_cfg(cfg, seed=derive_seed(cfg.base_seed, 4)),
        )

    def train_original(self) -> TrainResult:
        return train(self.init, self.splits.train, self.train_cfg)

    def forget_retain(self, ratio: float | None = None) -> tuple[DatasetBundle, DatasetBundle]:
        ratio = self.cfg.forget_ratio if ratio is None else ratio
        return select_forget(self.splits.train, ratio, seed=derive_seed(self.cfg.base_seed, 5))

    def unlearn(self, original: Model, forget: DatasetBundle) -> Model:
        return attack_mod.apply_unlearning(
            _unlearn_settings(self.cfg),
            init=self.init,
            model=original,
            train_data=self.splits.train,
            forget=forget,
            train_cfg=self.train_cfg,
            seed=derive_seed(self.cfg.base_seed, 7),
        )

    def target(self, retain: DatasetBundle) -> TargetSet:
        return build_target_set(
            retain, self.splits.val, self.cfg.target_size, seed=derive_seed(self.cfg.base_seed, 6)
        )

    def shadow_fit(self, ratio: float | None = None) -> ShadowFit:
        cfg = self.cfg
        return run_shadow_pipeline(
            shadow_train=self.splits.shadow_train,
            shadow_val=self.splits.shadow_val,
            layer_dims=self.layer_dims,
            train_cfg=self.train_cfg,
            unlearn=_unlearn_settings(cfg),
            k_originals=cfg.shadow.k_originals,
            k_unlearned=cfg.shadow.k_unlearned,
            forget_ratio=cfg.forget_ratio if ratio is None else ratio,
            base_seed=derive_seed(cfg.base_seed, 8),
            n_members=cfg.shadow.members,
            n_nonmembers=cfg.shadow.nonmembers,
            share_forget_draws=cfg.shadow.share_forget_draws,
            workers=cfg.workers,
        )


def _stamp(cfg: ExperimentConfig) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "base_seed": cfg.base_seed,
        "tool_version": TOOL_VERSION,
    }


def _csv_artifact(cfg: ExperimentConfig, relpath: str, header: list[str], rows) -> Artifact:
    buf = io.StringIO()
    stamp = _stamp(cfg)
    buf.write(
        f"# config_hash={stamp['config_hash']} base_seed={stamp['base_seed']}"
        f" tool_version={stamp['tool_version']}\n"
    )
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_csv_cell(v) for v in row) + "\n")
    return Artifact.text(relpath, buf.getvalue())


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_artifact(cfg: ExperimentConfig, relpath: str, payload: dict) -> Artifact:
    doc = {**_stamp(cfg), **payload}
    return Artifact.text(relpath, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _ids_digest(ids) -> str:
    joined = ",".join(str(int(i)) for i in sorted(int(i) for i in ids))
    return hashlib.sha256(joined.encode()).hexdigest()[:12]


def _checkpoint_artifact(
    cfg: ExperimentConfig, relpath: str, model: Model, provenance: str
) -> Artifact:
    stamp = _stamp(cfg)
    meta = CheckpointMeta(
        training_seed=cfg.base_seed,
        provenance=f"{provenance};config={stamp['config_hash']};v={stamp['tool_version']}",
    )
    return Artifact(relpath, checkpoint_bytes(model, meta))


def run_train(cfg: ExperimentConfig) -> RunOutput:
    """Train the original model; emit checkpoint, loss curve, and split manifest."""
    pipe = Pipeline.prepare(cfg)
    result = pipe.train_original()
    model = result.model
    report = {
        **_stamp(cfg),
        "layer_dims": list(pipe.layer_dims),
        "train_accuracy": accuracy(model, pipe.splits.train.features, pipe.splits.train.labels),
        "val_accuracy": accuracy(model, pipe.splits.val.features, pipe.splits.val.labels),
        "final_loss": result.epoch_losses[-1],
        "epochs": cfg.train.epochs,
    }
    artifacts = [
        _checkpoint_artifact(cfg, "checkpoints/original.ckpt", model, "original"),
        _csv_artifact(
            cfg,
            "loss_train.csv",
            ["epoch", "loss"],
            [(e, loss) for e, loss in enumerate(result.epoch_losses)],
        ),
        _json_artifact(cfg, "split_manifest.json", {"splits": pipe.splits.manifest()}),
    ]
    return RunOutput(report=report, artifacts=artifacts)


def run_unlearn(cfg: ExperimentConfig, checkpoint_path: str | None = None) -> RunOutput:
    """Unlearn the configured forget set from the original model."""
    pipe = Pipeline.prepare(cfg)
    if checkpoint_path is not None:
        original, _meta = load_checkpoint(checkpoint_path)
        if original.layer_dims != pipe.layer_dims:
            raise ValueError(
                f"checkpoint dims {original.layer_dims} do not match config dims {pipe.layer_dims}"
            )
    else:
        original = pipe.train_original().model
    forget, retain = pipe.forget_retain()
    unlearned = pipe.unlearn(original, forget)
    method = cfg.unlearn.method
    forget_digest = _ids_digest(forget.ids)
    report = {
        **_stamp(cfg),
        "method": method,
        "forget_size": len(forget),
        "forget_digest": forget_digest,
        "original_forget_accuracy": accuracy(original, forget.features, forget.labels),
        "unlearned_forget_accuracy": accuracy(unlearned, forget.features, forget.labels),
        "unlearned_retain_accuracy": accuracy(unlearned, retain.features, retain.labels),
        "unlearned_val_accuracy": accuracy(
            unlearned, pipe.splits.val.features, pipe.splits.val.labels
        ),
    }
    artifacts = [
        _checkpoint_artifact(
            cfg,
            f"checkpoints/unlearned_{method}.ckpt",
            unlearned,
            f"unlearned:{method};forget={forget_digest}",
        ),
        _json_artifact(
            cfg,
            "forget_manifest.json",
            {"method": method, "forget_ids": [int(i) for i in forget.ids]},
        ),
    ]
    return RunOutput(report=report, artifacts=artifacts)


def _verdict_rows(verdicts):
    return [(v.id, v.alpha, v.ratio, v.decision, v.truth) for v in verdicts]


def _shadow_fit_payload(fit: ShadowFit) -> dict:
    return {
        "stats": fit.to_dict(),
        "bank": {"mem": fit.bank.mem, "non": fit.bank.non},
    }


def shadow_fit_from_payload(payload: dict) -> ShadowFit:
    stats = {m: ShadowStats.from_dict(d) for m, d in payload["stats"].items()}
    bank = ShadowScoreBank(
        mem={m: list(v) for m, v in payload["bank"]["mem"].items()},
        non={m: list(v) for m, v in payload["bank"]["non"].items()},
    )
    return ShadowFit(stats=stats, bank=bank)


def run_attack(
    cfg: ExperimentConfig,
    stats_payload: dict | None = None,
    ratio: float | None = None,
) -> RunOutput:
    """Full dual-view attack plus single-view and threshold baselines."""
    pipe = Pipeline.prepare(cfg)
    original = pipe.train_original().model
    forget, retain = pipe.forget_retain(ratio)
    unlearned = pipe.unlearn(original, forget)
    target = pipe.target(retain)

    if stats_payload is not None:
        fit = shadow_fit_from_payload(stats_payload)
        shadow_reused = True
    else:
        fit = pipe.shadow_fit(ratio)
        shadow_reused = False

    verdicts = {
        "dual_view": attack_mod.attack(target, original, unlearned, fit.stats[METRIC_UCD], cfg.threshold),
        "conf_o": baseline_conf(original, target, fit.stats[METRIC_CONF_ORIGINAL], cfg.threshold),
        "conf_u": baseline_conf(unlearned, target, fit.stats[METRIC_CONF_UNLEARNED], cfg.threshold),
    }
    shadow_scores = np.array(fit.bank.mem[METRIC_UCD] + fit.bank.non[METRIC_UCD])
    shadow_truth = np.array(
        [1] * len(fit.bank.mem[METRIC_UCD]) + [0] * len(fit.bank.non[METRIC_UCD])
    )
    target_alphas = log_odds(ucd_batch(original, unlearned, target.features, target.labels))
    verdicts["threshold"] = baseline_threshold(
        shadow_scores, shadow_truth, target, target_alphas
    )

    reports = {
        name: evaluate_verdicts(vs, fpr_targets=tuple(cfg.fpr_targets)).to_dict()
        for name, vs in verdicts.items()
    }
    report = {
        **_stamp(cfg),
        "forget_ratio": cfg.forget_ratio if ratio is None else ratio,
        "shadow_reused": shadow_reused,
        "attacks": reports,
    }
    artifacts = [
        _json_artifact(cfg, "metrics.json", report),
        _json_artifact(cfg, "shadow_stats.json", _shadow_fit_payload(fit)),
        _csv_artifact(
            cfg,
            "roc_dual_view.csv",
            ["fpr", "tpr"],
            [(fpr, tpr) for fpr, tpr in evaluate_verdicts(verdicts["dual_view"]).roc],
        ),
    ]
    for name, vs in verdicts.items():
        artifacts.append(
            _csv_artifact(
                cfg,
                f"verdicts_{name}.csv",
                ["id", "alpha", "likelihood_ratio", "decision", "truth"],
                _verdict_rows(vs),
            )
        )
    return RunOutput(report=report, artifacts=artifacts)


def _density_artifacts(cfg: ExperimentConfig, pipe: Pipeline, original, unlearned, target) -> list[Artifact]:
    deltas = ucd_batch(original, unlearned, target.features, target.labels)
    table = density_export(deltas, target.truth, cfg.gain_bins)
    artifacts = [
        _csv_artifact(
            cfg,
            "density_ucd.csv",
            ["bin_lo", "bin_hi", "count_members", "count_nonmembers"],
            table.rows(),
        )
    ]
    if cfg.include_influence:
        forget, _ = pipe.forget_retain()
        inverse_op = WoodFisherInverse.from_model(
            original, pipe.splits.train, cfg.influence_damping
        )
        rows = influence_report(original, forget, target, inverse_op)
        scores = np.array([r.score for r in rows])
        inf_table = density_export(scores, target.truth, cfg.gain_bins)
        artifacts.append(
            _csv_artifact(
                cfg,
                "density_influence.csv",
                ["bin_lo", "bin_hi", "count_members", "count_nonmembers"],
                inf_table.rows(),
            )
        )
        artifacts.append(
            _csv_artifact(
                cfg,
                "influence_scores.csv",
                ["id", "truth", "score"],
                [(r.id, r.truth, r.score) for r in rows],
            )
        )
    return artifacts


def run_gain(cfg: ExperimentConfig) -> RunOutput:
    """Estimate the dual-view knowledge gain on the target set."""
    pipe = Pipeline.prepare(cfg)
    original = pipe.train_original().model
    forget, retain = pipe.forget_retain()
    unlearned = pipe.unlearn(original, forget)
    target = pipe.target(retain)

    deltas = delta_behavior_batch(
        original, unlearned, target.features, target.labels, mode=cfg.gain_mode
    )
    estimate = estimate_gain(
        deltas[target.truth == 1], deltas[target.truth == 0], bin_count=cfg.gain_bins
    )
    report = {**_stamp(cfg), "gain": estimate.to_dict(), "mode": cfg.gain_mode}
    artifacts = [_json_artifact(cfg, "gain.json", report)]
    artifacts.extend(_density_artifacts(cfg, pipe, original, unlearned, target))
    return RunOutput(report=report, artifacts=artifacts)


def run_export_densities(cfg: ExperimentConfig) -> RunOutput:
    """Histogram exports only (UCD and, when enabled, influence scores)."""
    pipe = Pipeline.prepare(cfg)
    original = pipe.train_original().model
    forget, retain = pipe.forget_retain()
    unlearned = pipe.unlearn(original, forget)
    target = pipe.target(retain)
    artifacts = _density_artifacts(cfg, pipe, original, unlearned, target)
    report = {**_stamp(cfg), "exported": [a.relpath for a in artifacts]}
    return RunOutput(report=report, artifacts=artifacts)


def run_sweep(cfg: ExperimentConfig, ratios: list[float]) -> RunOutput:
    """Re-run the attack across forget ratios; aggregate headline metrics."""
    if not ratios:
        raise ValueError("sweep needs at least one forget ratio")
    rows = []
    sub_reports = {}
    for ratio in sorted(ratios):
        sub_cfg = cfg.model_copy(update={"forget_ratio": ratio})
        sub_run = run_attack(sub_cfg)
        attacks = sub_run.report["attacks"]
        rows.append(
            (
                ratio,
                attacks["dual_view"]["balanced_accuracy"],
                attacks["dual_view"]["auc"],
                attacks["conf_o"]["balanced_accuracy"],
                attacks["conf_u"]["balanced_accuracy"],
                attacks["threshold"]["balanced_accuracy"],
            )
        )
        sub_reports[repr(ratio)] = sub_run.report
    report = {**_stamp(cfg), "ratios": sorted(ratios), "runs": sub_reports}
    artifacts = [
        _csv_artifact(
            cfg,
            "sweep.csv",
            [
                "forget_ratio",
                "dual_view_balanced_accuracy",
                "dual_view_auc",
                "conf_o_balanced_accuracy",
                "conf_u_balanced_accuracy",
                "threshold_balanced_accuracy",
            ],
            rows,
        )
    ]
    return RunOutput(report=report, artifacts=artifacts)
