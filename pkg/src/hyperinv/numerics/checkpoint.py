"""Checkpoint I/O: JSON manifest plus a raw little-endian float64 blob.

``<stem>.json`` lists every array by name, shape and byte offset into
``<stem>.bin``; arbitrary JSON-serializable metadata rides along under
``"meta"``. Writes go through a temp file and an atomic rename.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

FORMAT = "hyperinv-checkpoint/1"


class CheckpointError(ValueError):
    pass


def _atomic_write(path, payload, mode="wb"):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, mode) as fh:
        fh.write(payload)
    os.replace(tmp, path)


def save_checkpoint(stem, arrays, meta=None):
    """Write ``arrays`` (name -> ndarray) to ``stem.json`` / ``stem.bin``; returns the manifest."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        raw = arr.tobytes()
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    manifest = {
        "format": FORMAT,
        "dtype": "float64-le",
        "blob": stem.name + ".bin",
        "nbytes": offset,
        "sha256": hashlib.sha256(blob).hexdigest(),
        "params": entries,
        "meta": meta or {},
    }
    _atomic_write(stem.with_suffix(".bin"), blob)
    _atomic_write(stem.with_suffix(".json"), json.dumps(manifest, indent=2).encode())
    return manifest


def read_manifest(stem):
    path = Path(stem).with_suffix(".json")
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed checkpoint manifest {path}: {exc}") from None
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} manifest")
    for key in ("params", "nbytes", "blob"):
        if key not in manifest:
            raise CheckpointError(f"{path} is missing field {key!r}")
    return manifest


def load_checkpoint(stem):
    """Return (arrays, meta); raises :class:`CheckpointError` on any inconsistency."""
    stem = Path(stem)
    manifest = read_manifest(stem)
    blob_path = stem.parent / manifest["blob"]
    try:
        blob = blob_path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint blob not found: {blob_path}") from None
    if len(blob) != manifest["nbytes"]:
        raise CheckpointError(f"{blob_path} holds {len(blob)} bytes, manifest says {manifest['nbytes']}")
    arrays = {}
    for entry in manifest["params"]:
        try:
            name, shape, offset = entry["name"], tuple(entry["shape"]), int(entry["offset"])
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"bad parameter entry {entry!r}") from exc
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if offset < 0 or end > len(blob):
            raise CheckpointError(f"parameter {name!r} spans bytes {offset}..{end}, past end of blob")
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
    return arrays, manifest.get("meta", {})


def checkpoint_digest(stem):
    """SHA-256 over manifest and blob bytes."""
    stem = Path(stem)
    h = hashlib.sha256()
    h.update(stem.with_suffix(".json").read_bytes())
    h.update(stem.with_suffix(".bin").read_bytes())
    return h.hexdigest()


def arrays_digest(arrays):
    h = hashlib.sha256()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()
