"""Self-describing tensor checkpoint files.

Layout::

    GNNJED-CKPT <version> <manifest-bytes>\\n
    <manifest: UTF-8 JSON>
    <payload: little-endian float32 tensors, concatenated>

The manifest holds ``version``, a ``tensors`` list of
``{name, shape, dtype, offset, nbytes}`` (offsets relative to the payload
start) and a free-form ``meta`` object.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

MAGIC = "GNNJED-CKPT"
VERSION = 1
_DTYPE = "<f4"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    path = Path(path)
    entries = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(np.asarray(arr), dtype=_DTYPE)
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "float32",
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = json.dumps({"version": VERSION, "tensors": entries, "meta": meta or {}},
                          sort_keys=True).encode("utf-8")
    header = f"{MAGIC} {VERSION} {len(manifest)}\n".encode("ascii")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(manifest)
        for raw in chunks:
            fh.write(raw)
    os.replace(tmp, path)
    return path


def read_manifest(path) -> tuple[dict, int]:
    with open(path, "rb") as fh:
        line = fh.readline().decode("ascii", errors="replace").split()
        if len(line) != 3 or line[0] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, size = int(line[1]), int(line[2])
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        manifest = json.loads(fh.read(size).decode("utf-8"))
        if manifest.get("version") != version:
            raise CheckpointError(f"{path}: manifest version mismatch")
        return manifest, fh.tell()


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    manifest, start = read_manifest(path)
    with open(path, "rb") as fh:
        fh.seek(start)
        payload = fh.read()
    tensors = {}
    for entry in manifest["tensors"]:
        if entry.get("dtype") != "float32":
            raise CheckpointError(f"unsupported dtype {entry.get('dtype')!r} for {entry['name']}")
        raw = payload[entry["offset"]: entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise CheckpointError(f"truncated payload for {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(raw, dtype=_DTYPE).reshape(entry["shape"]).astype(np.float32)
    return tensors, manifest.get("meta", {})
