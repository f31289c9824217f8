"""Checkpoint files: a JSON manifest plus a raw little-endian float32 blob."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

FORMAT = "stateplan-checkpoint/1"


def save_checkpoint(manifest_path: str | os.PathLike, params: dict[str, np.ndarray],
                    meta: dict | None = None) -> tuple[Path, Path]:
    """Write ``params`` to ``<stem>.bin`` and the manifest to ``manifest_path``."""
    manifest_path = Path(manifest_path)
    blob_path = manifest_path.with_suffix(".bin")
    entries = []
    offset = 0
    chunks = []
    for name in params:
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": arr.nbytes})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {
        "format": FORMAT,
        "dtype": "float32",
        "byteorder": "little",
        "blob": blob_path.name,
        "params": entries,
        "meta": meta or {},
    }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    blob_path.write_bytes(b"".join(chunks))
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest_path, blob_path


def load_checkpoint(manifest_path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{manifest_path}: unknown checkpoint format {manifest.get('format')!r}")
    blob = (manifest_path.parent / manifest["blob"]).read_bytes()
    params = {}
    for e in manifest["params"]:
        end = e["offset"] + e["nbytes"]
        if end > len(blob):
            raise ValueError(f"{e['name']}: needs bytes [{e['offset']}, {end}) but blob has {len(blob)}")
        arr = np.frombuffer(blob, dtype="<f4", count=e["nbytes"] // 4, offset=e["offset"])
        params[e["name"]] = arr.reshape(e["shape"]).astype(np.float32)
    return params, manifest["meta"]
