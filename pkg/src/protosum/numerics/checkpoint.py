"""Checkpoints: a JSON manifest (name -> shape, offset) plus one flat
little-endian float64 blob. Loading is bit-exact."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MANIFEST = "manifest.json"
BLOB = "params.bin"
_DTYPE = np.dtype("<f8")


def save_checkpoint(directory: str | Path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries, offset, chunks = [], 0, []
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype=_DTYPE)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        chunks.append(arr.reshape(-1))
    blob = np.concatenate(chunks) if chunks else np.zeros(0, dtype=_DTYPE)
    (directory / BLOB).write_bytes(blob.astype(_DTYPE).tobytes())
    manifest = {"dtype": "<f8", "count": int(offset), "tensors": entries, "meta": meta or {}}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_checkpoint(directory: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    blob = np.frombuffer((directory / BLOB).read_bytes(), dtype=_DTYPE)
    if blob.size != manifest["count"]:
        raise ValueError(f"checkpoint blob holds {blob.size} values, manifest expects {manifest['count']}")
    params = {}
    for e in manifest["tensors"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        params[e["name"]] = blob[e["offset"] : e["offset"] + n].reshape(e["shape"]).astype(np.float64)
    return params, manifest.get("meta", {})


def checkpoint_exists(directory: str | Path) -> bool:
    directory = Path(directory)
    return (directory / MANIFEST).is_file() and (directory / BLOB).is_file()
