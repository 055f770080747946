# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Checkpoint persistence.

A checkpoint is a directory with two files: ``manifest.json`` listing
``{name, shape, offset, length}`` per array together with the RNG seed,
step counter and free-form metadata, and ``params.bin`` holding every
array as little-endian float32 in manifest order. Files are written to
temporaries and moved into place with ``os.replace``.
"""

import hashlib
import json
import logging
import os
import tempfile
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np

from poseflow.config import (
    CHECKPOINT_BLOB,
    CHECKPOINT_FORMAT,
    CHECKPOINT_MANIFEST,
    SCHEMA_VERSION,
)
from poseflow.errors import CheckpointError
from poseflow.layers import ParameterStore

logger = logging.getLogger(__name__)


def atomic_write_bytes(path: Path, payload: bytes) -> None:
    """Write ``payload`` to ``path`` through a temporary file in the same directory."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def canonical_json(document: Any) -> bytes:
    return (json.dumps(document, sort_keys=True, indent=2) + "\n").encode("utf-8")


def save_arrays(
    directory: str | os.PathLike[str],
    arrays: Mapping[str, np.ndarray],
    *,
    seed: int,
    step: int,
    extra: Mapping[str, Any] | None = None,
) -> Path:
    """Write named arrays in checkpoint format and return the directory."""
    out = Path(directory)
    entries = []
    chunks = []
    offset = 0
    for name, values in arrays.items():
        blob = np.ascontiguousarray(values, dtype="<f4").tobytes()
        entries.append(
            {"name": name, "shape": list(np.shape(values)), "offset": offset, "length": len(blob)}
        )
        chunks.append(blob)
        offset += len(blob)
    payload = b"".join(chunks)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "schema_version": SCHEMA_VERSION,
        "seed": int(seed),
        "step": int(step),
        "blob": CHECKPOINT_BLOB,
        "sha256": hashlib.sha256(payload).hexdigest(),
        "parameters": entries,
        "extra": dict(extra or {}),
    }
    atomic_write_bytes(out / CHECKPOINT_BLOB, payload)
    atomic_write_bytes(out / CHECKPOINT_MANIFEST, canonical_json(manifest))
    logger.info("wrote %d arrays (%d bytes) to %s", len(entries), len(payload), out)
    return out


def save_checkpoint(
    directory: str | os.PathLike[str],
    store: ParameterStore,
    *,
    step: int,
    extra: Mapping[str, Any] | None = None,
) -> Path:
    return save_arrays(directory, store.state(), seed=store.seed, step=step, extra=extra)


def read_manifest(directory: str | os.PathLike[str]) -> dict[str, Any]:
    path = Path(directory) / CHECKPOINT_MANIFEST
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint manifest is not valid JSON: {exc}") from None
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a poseflow checkpoint")
    return dict(manifest)


def load_arrays(directory: str | os.PathLike[str]) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    """Read a checkpoint directory into ``(arrays, manifest)``."""
    manifest = read_manifest(directory)
    blob_path = Path(directory) / manifest.get("blob", CHECKPOINT_BLOB)
    try:
        payload = blob_path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint blob not found: {blob_path}") from None
    if hashlib.sha256(payload).hexdigest() != manifest.get("sha256"):
        raise CheckpointError(f"checksum mismatch for {blob_path}")
    arrays: dict[str, np.ndarray] = {}
    for entry in manifest["parameters"]:
        start, length = int(entry["offset"]), int(entry["length"])
        if start + length > len(payload):
            raise CheckpointError(f"{entry['name']}: blob truncated")
        values = np.frombuffer(payload, dtype="<f4", count=length // 4, offset=start)
        arrays[entry["name"]] = values.reshape(entry["shape"]).astype(np.float32)
    return arrays, manifest


def load_checkpoint(
    directory: str | os.PathLike[str], store: ParameterStore | None = None
) -> dict[str, Any]:
    """Load a checkpoint, optionally copying its parameters into ``store``.

    Returns the manifest.
    """
    arrays, manifest = load_arrays(directory)
    if store is not None:
        store.load_state(arrays)
    return manifest


__all__ = [
    "atomic_write_bytes",
    "canonical_json",
    "load_arrays",
    "load_checkpoint",
    "read_manifest",
    "save_arrays",
    "save_checkpoint",
]
