"""Lossless binary model checkpoints.

Layout (all integers little-endian):

    bytes 0..7    magic ``b"DVCHKPT\\0"``
    bytes 8..11   format version (u32)
    bytes 12..15  number of layer dims (u32)
    then          layer dims (u32 each)
    then          training seed (i64)
    then          provenance tag length (u32) + UTF-8 bytes
    then          parameters as raw float64

Raw float64 storage makes save -> load bit-exact, which the retrain
determinism checks rely on.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import Model, param_count

MAGIC = b"DVCHKPT\x00"
FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    """File is not a readable checkpoint (bad magic, version, or structure)."""


@dataclass(frozen=True)
class CheckpointMeta:
    training_seed: int
    provenance: str  # e.g. "original" or "unlearned:<method>"


def _read_exact(buf: io.BufferedIOBase, n: int, what: str) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise CheckpointFormatError(f"truncated checkpoint: expected {n} bytes for {what}")
    return data


def checkpoint_bytes(model: Model, meta: CheckpointMeta) -> bytes:
    if not np.all(np.isfinite(model.params)):
        raise ValueError("refusing to save non-finite parameters")
    tag = meta.provenance.encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(model.layer_dims)))
    buf.write(struct.pack(f"<{len(model.layer_dims)}I", *model.layer_dims))
    buf.write(struct.pack("<q", int(meta.training_seed)))
    buf.write(struct.pack("<I", len(tag)))
    buf.write(tag)
    buf.write(np.ascontiguousarray(model.params, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(model: Model, meta: CheckpointMeta, path: str | Path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, meta))


def load_checkpoint(path: str | Path) -> tuple[Model, CheckpointMeta]:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, "magic")
        if magic != MAGIC:
            raise CheckpointFormatError(f"bad magic bytes {magic!r}")
        version, n_dims = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != FORMAT_VERSION:
            raise CheckpointFormatError(f"unsupported format version {version}")
        if not 2 <= n_dims <= 64:
            raise CheckpointFormatError(f"implausible layer count {n_dims}")
        dims = struct.unpack(f"<{n_dims}I", _read_exact(fh, 4 * n_dims, "layer dims"))
        if any(d < 1 for d in dims):
            raise CheckpointFormatError(f"non-positive layer dim in {dims}")
        (seed,) = struct.unpack("<q", _read_exact(fh, 8, "training seed"))
        (tag_len,) = struct.unpack("<I", _read_exact(fh, 4, "provenance length"))
        tag = _read_exact(fh, tag_len, "provenance").decode("utf-8")
        n_params = param_count(dims)
        raw = _read_exact(fh, 8 * n_params, "parameters")
        if fh.read(1):
            raise CheckpointFormatError("trailing bytes after parameters")
    params = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(params)):
        raise CheckpointFormatError("checkpoint parameters contain non-finite values")
    return Model(dims, params), CheckpointMeta(training_seed=seed, provenance=tag)
