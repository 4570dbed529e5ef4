"""Experiment configuration: validated, serializable, and content-hashed.

A single nested config drives every pipeline command; the hash of its
canonical JSON (minus execution-only fields) stamps all output files so
runs can be traced back to their exact settings.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator

TOOL_VERSION = "0.1.0"


class SyntheticData(BaseModel):
    kind: Literal["synthetic"] = "synthetic"
    classes: int = Field(default=10, ge=2)
    dim: int = Field(default=20, ge=1)
    per_class: int = Field(default=400, ge=1)
    spread: float = Field(default=0.75, ge=0.0)


class IdxData(BaseModel):
    kind: Literal["idx"] = "idx"
    images_path: str
    labels_path: str


class SplitFractions(BaseModel):
    train: float = 0.5
    val: float = 0.1
    shadow_train: float = 0.2
    shadow_val: float = 0.2

    @model_validator(mode="after")
    def _check_fractions(self):
        fracs = (self.train, self.val, self.shadow_train, self.shadow_val)
        if any(not 0.0 < f < 1.0 for f in fracs):
            raise ValueError(f"all split fractions must lie in (0, 1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)}")
        return self


class ModelSettings(BaseModel):
    hidden: list[int] = Field(default_factory=lambda: [128])

    @field_validator("hidden")
    @classmethod
    def _positive_widths(cls, v):
        if any(h < 1 for h in v):
            raise ValueError(f"hidden widths must be positive, got {v}")
        return v


class TrainSettings(BaseModel):
    learning_rate: float = Field(default=0.01, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=100, ge=0)
    weight_decay: float = Field(default=0.0, ge=0.0)


class UnlearnSettingsModel(BaseModel):
    method: Literal["retrain", "gradient_ascent", "influence", "salun", "none"] = "retrain"
    ga_steps: int = Field(default=5, ge=0)
    ga_learning_rate: float = Field(default=0.01, gt=0.0)
    iu_damping: float = Field(default=0.01, gt=0.0)
    salun_fraction: float = Field(default=0.5, gt=0.0, le=1.0)
    salun_epochs: int = Field(default=2, ge=0)


class ShadowSettings(BaseModel):
    k_originals: int = Field(default=4, ge=1)
    k_unlearned: int = Field(default=16, ge=1)
    members: Optional[int] = Field(default=None, ge=2)  # None: 3/4 of the pool
    nonmembers: Optional[int] = Field(default=None, ge=2)
    share_forget_draws: bool = False


class ExperimentConfig(BaseModel):
    dataset: Union[SyntheticData, IdxData] = Field(
        default_factory=SyntheticData, discriminator="kind"
    )
    split: SplitFractions = Field(default_factory=SplitFractions)
    model: ModelSettings = Field(default_factory=ModelSettings)
    train: TrainSettings = Field(default_factory=TrainSettings)
    unlearn: UnlearnSettingsModel = Field(default_factory=UnlearnSettingsModel)
    shadow: ShadowSettings = Field(default_factory=ShadowSettings)
    forget_ratio: float = Field(default=0.05, gt=0.0, lt=1.0)
    target_size: int = Field(default=1000, ge=2)
    threshold: float = Field(default=1.0, ge=0.0)
    fpr_targets: list[float] = Field(default_factory=lambda: [0.001, 0.01])
    gain_bins: int = Field(default=32, ge=2)
    gain_mode: Literal["abs_ucd", "cosine"] = "abs_ucd"
    include_influence: bool = False
    influence_damping: float = Field(default=0.01, gt=0.0)
    base_seed: int = 0
    output_dir: str = "out"
    workers: int = Field(default=1, ge=1)

    @field_validator("target_size")
    @classmethod
    def _even_target(cls, v):
        if v % 2 != 0:
            raise ValueError(f"target_size must be even for a balanced target set, got {v}")
        return v

    @field_validator("fpr_targets")
    @classmethod
    def _valid_fprs(cls, v):
        if any(not 0.0 <= f <= 1.0 for f in v):
            raise ValueError(f"fpr_targets must lie in [0, 1], got {v}")
        return v

    def canonical_json(self) -> str:
        """Deterministic JSON of everything that affects results (not where they go)."""
        payload = self.model_dump(mode="json")
        payload.pop("output_dir", None)
        payload.pop("workers", None)
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:16]


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentConfig.model_validate(json.load(fh))


def apply_overrides(config: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply ``dotted.key=value`` overrides on top of a config (values parsed as JSON)."""
    data = config.model_dump(mode="json")
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings are allowed unquoted
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ValueError(f"override {item!r}: unknown section {part!r}")
            node = node[part]
        node[parts[-1]] = value
    return ExperimentConfig.model_validate(data)
