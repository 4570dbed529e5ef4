"""Dataset generation, IDX ingestion, splitting, and membership bookkeeping.

Every operation here is a deterministic function of (inputs, seed); splits
and draws are tracked by stable integer sample ids so that disjointness and
coverage can be asserted end to end.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file (magic, counts, or truncation)."""


@dataclass(frozen=True)
class DatasetBundle:
    """Feature matrix, integer labels, and unique stable sample ids."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64 in [0, n_classes)
    ids: np.ndarray  # (n,) int64, unique

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] == 0:
            raise ValueError(f"features must be a non-empty 2-d matrix, got {features.shape}")
        n = features.shape[0]
        if labels.shape != (n,) or ids.shape != (n,):
            raise ValueError("features, labels and ids must have matching length")
        if labels.min() < 0:
            raise ValueError("negative label")
        if len(np.unique(ids)) != n:
            raise ValueError("sample ids must be unique")
        for name, arr in (("features", features), ("labels", labels), ("ids", ids)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def take(self, indices: np.ndarray) -> "DatasetBundle":
        """Subset by positional indices, keeping ids."""
        idx = np.asarray(indices, dtype=np.int64)
        return DatasetBundle(self.features[idx], self.labels[idx], self.ids[idx])

    def take_ids(self, ids: np.ndarray) -> "DatasetBundle":
        """Subset by sample ids (order follows ``ids``)."""
        pos = {int(v): i for i, v in enumerate(self.ids)}
        idx = np.array([pos[int(v)] for v in ids], dtype=np.int64)
        return self.take(idx)

    def drop_ids(self, ids: np.ndarray) -> "DatasetBundle":
        keep = ~np.isin(self.ids, np.asarray(ids, dtype=np.int64))
        return self.take(np.flatnonzero(keep))

    def in_id_order(self) -> "DatasetBundle":
        return self.take(np.argsort(self.ids, kind="stable"))


@dataclass(frozen=True)
class SplitSpec:
    """Fractions for the four-way train / val / shadow-train / shadow-val split."""

    train: float = 0.5
    val: float = 0.1
    shadow_train: float = 0.2
    shadow_val: float = 0.2

    def __post_init__(self):
        fracs = (self.train, self.val, self.shadow_train, self.shadow_val)
        if any(not 0.0 < f < 1.0 for f in fracs):
            raise ValueError(f"all split fractions must lie in (0, 1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)}")


@dataclass(frozen=True)
class Splits:
    train: DatasetBundle
    val: DatasetBundle
    shadow_train: DatasetBundle
    shadow_val: DatasetBundle

    def as_dict(self) -> dict[str, DatasetBundle]:
        return {
            "train": self.train,
            "val": self.val,
            "shadow_train": self.shadow_train,
            "shadow_val": self.shadow_val,
        }

    def manifest(self) -> dict[str, list[int]]:
        """Split ids, for reproducibility manifests."""
        return {name: [int(i) for i in b.ids] for name, b in self.as_dict().items()}


@dataclass(frozen=True)
class TargetSet:
    """Balanced evaluation set: retained members (truth 1) and validation non-members (truth 0)."""

    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    truth: np.ndarray  # (n,) int64 membership bits

    def __post_init__(self):
        truth = np.ascontiguousarray(self.truth, dtype=np.int64)
        if truth.shape[0] != self.features.shape[0]:
            raise ValueError("truth length must match sample count")
        if not np.isin(truth, (0, 1)).all():
            raise ValueError("truth must be 0/1 bits")
        truth.setflags(write=False)
        object.__setattr__(self, "truth", truth)

    def __len__(self) -> int:
        return self.features.shape[0]


def gen_blobs(
    classes: int, dim: int, per_class: int, spread: float, seed: int
) -> DatasetBundle:
    """Isotropic Gaussian blobs around random unit-hypercube centroids.

    Controllable class overlap (via ``spread``) gives a tunable
    generalization gap, which is what the audit fixtures need.
    """
    if classes < 2 or per_class < 1 or dim < 1 or spread < 0:
        raise ValueError(
            f"degenerate blob spec: classes={classes} dim={dim} per_class={per_class} spread={spread}"
        )
    rng = np.random.default_rng(seed)
    centroids = rng.random((classes, dim))
    diffs = centroids[:, None, :] - centroids[None, :, :]
    dist = np.sqrt((diffs**2).sum(axis=-1))
    if np.min(dist[~np.eye(classes, dtype=bool)]) <= 0:
        raise ValueError("degenerate blob spec: coincident class centroids")
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    noise = rng.standard_normal((classes * per_class, dim))
    features = centroids[labels] + spread * noise
    return DatasetBundle(features, labels, np.arange(classes * per_class, dtype=np.int64))


def nearest_centroid_accuracy(bundle: DatasetBundle) -> float:
    """Accuracy of classifying each sample by its nearest class mean."""
    classes = bundle.n_classes
    means = np.stack([bundle.features[bundle.labels == c].mean(axis=0) for c in range(classes)])
    d2 = ((bundle.features[:, None, :] - means[None, :, :]) ** 2).sum(axis=-1)
    return float((d2.argmin(axis=1) == bundle.labels).mean())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise IdxFormatError(f"truncated IDX file: expected {n} bytes for {what}")
    return data


def load_idx(images_path: str | Path, labels_path: str | Path) -> DatasetBundle:
    """Load an IDX image/label pair; pixels are scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        magic, n_images, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, "image header"))
        if magic != IDX_IMAGES_MAGIC:
            raise IdxFormatError(f"bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
        pixels = _read_exact(fh, n_images * rows * cols, "pixels")
        if fh.read(1):
            raise IdxFormatError("trailing bytes after pixel data")
    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(">II", _read_exact(fh, 8, "label header"))
        if magic != IDX_LABELS_MAGIC:
            raise IdxFormatError(f"bad label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
        raw_labels = _read_exact(fh, n_labels, "labels")
        if fh.read(1):
            raise IdxFormatError("trailing bytes after label data")
    if n_images != n_labels:
        raise IdxFormatError(f"image/label count mismatch: {n_images} images vs {n_labels} labels")
    features = np.frombuffer(pixels, dtype=np.uint8).reshape(n_images, rows * cols) / 255.0
    labels = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    return DatasetBundle(features, labels, np.arange(n_images, dtype=np.int64))


def split_dataset(bundle: DatasetBundle, spec: SplitSpec, seed: int) -> Splits:
    """Disjoint four-way split; non-train sizes are floored, remainder goes to train."""
    n = len(bundle)
    n_val = int(spec.val * n)
    n_st = int(spec.shadow_train * n)
    n_sv = int(spec.shadow_val * n)
    n_train = n - n_val - n_st - n_sv
    if min(n_train, n_val, n_st, n_sv) < 1:
        raise ValueError(f"dataset of {n} samples leaves an empty split under {spec}")
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([n_train, n_val, n_st])
    parts = np.split(perm, bounds)
    return Splits(*(bundle.take(np.sort(p)) for p in parts))


def select_forget(train: DatasetBundle, ratio: float, seed: int) -> tuple[DatasetBundle, DatasetBundle]:
    """Draw the forget set at ``ratio`` of the training data; returns (forget, retain)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"forget ratio must lie in (0, 1), got {ratio}")
    n = len(train)
    n_forget = int(np.floor(ratio * n + 0.5))
    if n_forget < 1 or n_forget >= n:
        raise ValueError(f"ratio {ratio} on {n} samples leaves an empty forget or retain set")
    perm = np.random.default_rng(seed).permutation(n)
    forget = train.take(np.sort(perm[:n_forget]))
    retain = train.take(np.sort(perm[n_forget:]))
    return forget, retain


def sample_shadow_membership(
    shadow_train: DatasetBundle,
    shadow_val: DatasetBundle,
    k_members: int,
    k_nonmembers: int,
    seed: int,
) -> tuple[DatasetBundle, DatasetBundle]:
    """Draw one shadow model's member set (trained on) and non-member set (never trained on)."""
    if k_members < 1 or k_members > len(shadow_train):
        raise ValueError(f"cannot draw {k_members} members from pool of {len(shadow_train)}")
    if k_nonmembers < 1 or k_nonmembers > len(shadow_val):
        raise ValueError(f"cannot draw {k_nonmembers} non-members from pool of {len(shadow_val)}")
    rng = np.random.default_rng(seed)
    mem_idx = rng.choice(len(shadow_train), size=k_members, replace=False)
    non_idx = rng.choice(len(shadow_val), size=k_nonmembers, replace=False)
    return shadow_train.take(np.sort(mem_idx)), shadow_val.take(np.sort(non_idx))


def build_target_set(
    retain: DatasetBundle, val: DatasetBundle, n_total: int, seed: int
) -> TargetSet:
    """Balanced target set: half retained members, half validation non-members."""
    if n_total < 2 or n_total % 2 != 0:
        raise ValueError(f"target size must be a positive even number, got {n_total}")
    half = n_total // 2
    if half > len(retain) or half > len(val):
        raise ValueError(
            f"target of {n_total} needs {half} from retain ({len(retain)}) and val ({len(val)})"
        )
    rng = np.random.default_rng(seed)
    mem = retain.take(np.sort(rng.choice(len(retain), size=half, replace=False)))
    non = val.take(np.sort(rng.choice(len(val), size=half, replace=False)))
    return TargetSet(
        features=np.concatenate([mem.features, non.features]),
        labels=np.concatenate([mem.labels, non.labels]),
        ids=np.concatenate([mem.ids, non.ids]),
        truth=np.concatenate([np.ones(half, dtype=np.int64), np.zeros(half, dtype=np.int64)]),
    )
