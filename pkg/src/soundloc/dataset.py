"""Binary container for lists of :class:`SceneRecording`.

Layout (see ``docs/formats.md``)::

    b"SLDS"                      magic
    uint32 LE                    header length H
    H bytes                      UTF-8 JSON header
    record blocks                float32 LE, one block per record

Each record block holds the channels (M x N, channel-major) followed by the
source signals (K x N).  The header stores a CRC-32 of every block.
"""
from __future__ import annotations

import json
import os
import struct
import zlib

import numpy as np

from .acoustics import MicSpec, RoomSpec, SceneRecording, SourceSpec
from .errors import FormatError

MAGIC = b"SLDS"
FORMAT_VERSION = 1
_F32 = np.dtype("<f4")


def _record_header(rec: SceneRecording, offset: int, nbytes: int, crc: int) -> dict:
    return {
        "room": rec.room.to_dict(),
        "sample_rate": rec.room.sample_rate,
        "seed": rec.rng_seed,
        "noise_std": rec.noise_std,
        "n_channels": int(rec.channels.shape[0]),
        "n_samples": int(rec.channels.shape[1]),
        "mics": [{"id": m.id, "position": list(m.position), "known_position": m.known_position}
                 for m in rec.mics],
        "sources": [{"position": list(s.position), "kind": s.kind, "n_samples": int(s.signal.size)}
                    for s in rec.sources],
        "offset": offset,
        "nbytes": nbytes,
        "crc32": crc,
    }


def _record_bytes(rec: SceneRecording) -> bytes:
    parts = [np.ascontiguousarray(rec.channels, dtype=_F32).tobytes()]
    parts += [np.ascontiguousarray(s.signal, dtype=_F32).tobytes() for s in rec.sources]
    return b"".join(parts)


def write_dataset(recordings, path) -> None:
    """Write recordings to ``path``; sample values are stored as float32."""
    blobs, records, offset = [], [], 0
    for rec in recordings:
        blob = _record_bytes(rec)
        records.append(_record_header(rec, offset, len(blob), zlib.crc32(blob)))
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"format_version": FORMAT_VERSION, "n_records": len(records),
                         "records": records}, sort_keys=True).encode("utf-8")
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def read_dataset(path) -> list:
    """Read every recording from ``path``; raises :class:`FormatError` on any corruption."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a soundloc dataset (bad magic or truncated)")
    (hlen,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header ({exc})") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: format version {header.get('format_version')} != {FORMAT_VERSION}")
    body = data[8 + hlen:]
    total = sum(r["nbytes"] for r in header["records"])
    if len(body) != total:
        raise FormatError(f"{path}: body has {len(body)} bytes, header expects {total}")

    out = []
    for i, r in enumerate(header["records"]):
        blob = body[r["offset"]:r["offset"] + r["nbytes"]]
        if zlib.crc32(blob) != r["crc32"]:
            raise FormatError(f"{path}: checksum mismatch in record {i}")
        m, n = r["n_channels"], r["n_samples"]
        values = np.frombuffer(blob, dtype=_F32).astype(np.float32)
        channels = values[:m * n].reshape(m, n)
        pos = m * n
        sources = []
        for s in r["sources"]:
            sig = values[pos:pos + s["n_samples"]]
            pos += s["n_samples"]
            sources.append(SourceSpec(tuple(s["position"]), sig, s["kind"]))
        mics = [MicSpec(tuple(mc["position"]), mc["known_position"], mc["id"]) for mc in r["mics"]]
        out.append(SceneRecording(channels=channels, noise_std=r["noise_std"],
                                  room=RoomSpec.from_dict(r["room"]), mics=mics,
                                  sources=sources, rng_seed=r["seed"]))
    return out
