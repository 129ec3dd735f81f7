"""Checkpoint files.

Layout::

    TLDC1\\n
    <manifest: one line of JSON>\\n
    <blob: little-endian float32 arrays, concatenated in manifest order>

The manifest records the model configuration, every tensor's name and
shape, and free-form metadata (epoch, losses and metrics at save time).
"""

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagicError, BlobLengthError, LeafCNNError, ManifestError
from .model import ModelConfig, Sequential

MAGIC = b"TLDC1"
BLOB_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: dict
    metadata: dict = field(default_factory=dict)


def save_checkpoint(model, path, metadata=None):
    """Write ``model`` to ``path`` atomically."""
    path = Path(path)
    tensors = [(f"{i}.{name}", p) for i, name, p in model.parameters()]
    manifest = {
        "model": model.config.to_dict(),
        "tensors": [{"name": name, "shape": list(p.shape)} for name, p in tensors],
        "metadata": metadata or {},
    }
    header = MAGIC + b"\n" + json.dumps(manifest, sort_keys=True).encode() + b"\n"
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        for _, p in tensors:
            fh.write(np.ascontiguousarray(p, dtype=BLOB_DTYPE).tobytes())
    os.replace(tmp, path)
    return path


def read_checkpoint(path):
    """Parse and validate a checkpoint file without building a model."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise LeafCNNError(f"cannot read checkpoint {path}: {exc}") from exc
    if not raw.startswith(MAGIC + b"\n"):
        raise BadMagicError(f"{path}: not a TLDC1 checkpoint (bad magic)")
    end = raw.find(b"\n", len(MAGIC) + 1)
    if end < 0:
        raise ManifestError(f"{path}: manifest is not terminated")
    try:
        manifest = json.loads(raw[len(MAGIC) + 1 : end])
        config = ModelConfig.from_dict(manifest["model"])
        entries = [(t["name"], tuple(int(s) for s in t["shape"])) for t in manifest["tensors"]]
        metadata = manifest.get("metadata", {})
    except (ValueError, KeyError, TypeError) as exc:
        raise ManifestError(f"{path}: malformed manifest: {exc}") from exc
    except LeafCNNError as exc:
        raise ManifestError(f"{path}: invalid model config: {exc}") from exc
    blob = memoryview(raw)[end + 1 :]
    expected = sum(int(np.prod(shape)) for _, shape in entries) * BLOB_DTYPE.itemsize
    if len(blob) != expected:
        raise BlobLengthError(
            f"{path}: blob length mismatch: manifest needs {expected} bytes, file has {len(blob)}"
        )
    tensors = {}
    offset = 0
    for name, shape in entries:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype=BLOB_DTYPE, count=count, offset=offset)
        tensors[name] = arr.reshape(shape).astype(np.float32)
        offset += count * BLOB_DTYPE.itemsize
    return Checkpoint(config, tensors, metadata)


def load_checkpoint(path):
    """Rebuild the model stored at ``path``; its metadata lands in ``model.metadata``."""
    ckpt = read_checkpoint(path)
    try:
        model = Sequential(ckpt.config)
        model.load_state_dict(ckpt.tensors)
    except LeafCNNError as exc:
        raise ManifestError(f"{path}: tensors disagree with the model config: {exc}") from exc
    model.metadata = ckpt.metadata
    return model


def checkpoint_digest(path):
    """Short SHA-256 of the checkpoint bytes, used as a model id."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
