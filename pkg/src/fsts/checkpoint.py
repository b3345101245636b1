"""Checkpoint = JSON manifest + raw little-endian float32 payload.

``save_checkpoint(model, "run/model.json")`` writes the manifest there and
the payload next to it as ``run/model.bin``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .siamese import EmbeddingConfig, SiameseNet

CHECKPOINT_FORMAT = "fsts-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class ManifestError(CheckpointError):
    """Manifest disagrees with the model it describes or with its payload."""


class CheckpointVersionError(CheckpointError):
    pass


class PayloadTruncatedError(CheckpointError):
    pass


def _payload_path(manifest_path: Path) -> Path:
    return manifest_path.with_suffix(".bin")


def save_checkpoint(model: SiameseNet, path) -> Path:
    path = Path(path)
    payload = _payload_path(path)
    tensors, chunks, offset = [], [], 0
    for name, value in model.tensors().items():
        raw = np.ascontiguousarray(value, dtype="<f4").tobytes()
        tensors.append({"name": name, "shape": list(value.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dtype": "float32-le",
        "config": model.config.to_dict(),
        "payload": payload.name,
        "payload_bytes": offset,
        "tensors": tensors,
    }
    payload.write_bytes(b"".join(chunks))
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_checkpoint(path) -> tuple[SiameseNet, EmbeddingConfig]:
    """Rebuild a float32 model; raises before touching any weights if anything is off."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: manifest is not valid JSON ({exc})") from None
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ManifestError(f"{path}: not an fsts checkpoint manifest")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {manifest.get('version')}, expected {CHECKPOINT_VERSION}")
    config = EmbeddingConfig.from_dict(manifest["config"])
    model = SiameseNet(config)
    expected = {k: v.shape for k, v in model.tensors().items()}
    entries = manifest["tensors"]
    if len(entries) != len(expected) or {e["name"] for e in entries} != set(expected):
        raise ManifestError(f"{path}: manifest lists {len(entries)} tensors, model has {len(expected)}")
    buf = (path.parent / manifest["payload"]).read_bytes()
    if len(buf) != manifest["payload_bytes"]:
        raise PayloadTruncatedError(f"{path}: payload has {len(buf)} bytes, manifest says {manifest['payload_bytes']}")
    state = {}
    for e in entries:
        shape = tuple(e["shape"])
        if shape != expected[e["name"]]:
            raise ManifestError(f"{path}: {e['name']} has shape {shape}, config implies {expected[e['name']]}")
        n = int(np.prod(shape, dtype=np.int64)) * 4
        if e["nbytes"] != n or e["offset"] + n > len(buf):
            raise ManifestError(f"{path}: {e['name']} byte range is inconsistent")
        state[e["name"]] = np.frombuffer(buf, dtype="<f4", count=n // 4, offset=e["offset"]).reshape(shape)
    model.load_state(state)
    return model, config


def save_report(report, path) -> None:
    Path(path).write_text(report.to_text())
