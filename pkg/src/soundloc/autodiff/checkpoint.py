"""Parameter checkpoints: JSON manifest plus little-endian float64 blocks.

Layout::

    b"SLCK" | uint32 LE manifest length | manifest (UTF-8 JSON) | float64 LE blocks
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..errors import FormatError

MAGIC = b"SLCK"
FORMAT_VERSION = 1
_F64 = np.dtype("<f8")


def save_checkpoint(path, arrays: dict, hyperparameters: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name in sorted(arrays):
        a = np.array(arrays[name], dtype=_F64, order="C")
        blob = a.tobytes()
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    manifest = json.dumps({"format_version": FORMAT_VERSION, "hyperparameters": hyperparameters or {},
                           "tensors": entries}, sort_keys=True).encode("utf-8")
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", len(manifest)) + manifest)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple:
    """Return ``(arrays, hyperparameters)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a soundloc checkpoint")
    (mlen,) = struct.unpack("<I", data[4:8])
    try:
        manifest = json.loads(data[8:8 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt manifest") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {manifest.get('format_version')}")
    body = data[8 + mlen:]
    arrays = {}
    for e in manifest["tensors"]:
        if e["offset"] + e["nbytes"] > len(body):
            raise FormatError(f"{path}: truncated tensor {e['name']}")
        chunk = body[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(chunk, dtype=_F64).reshape(e["shape"]).astype(np.float64)
    return arrays, manifest["hyperparameters"]
