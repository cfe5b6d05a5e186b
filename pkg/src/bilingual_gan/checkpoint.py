"""Versioned binary container of named float64 tensors plus metadata.

Layout: 8-byte magic, little-endian u32 format version, u64 header length,
a UTF-8 JSON header (config echo, epoch, RNG state, tensor index), then
the raw little-endian float64 payload of each tensor in index order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"BLGANCK\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    config: dict = field(default_factory=dict)
    epoch: int = 0
    rng_state: dict | None = None
    extra: dict = field(default_factory=dict)


def to_bytes(ckpt: Checkpoint) -> bytes:
    index, offset, blobs = [], 0, []
    for name, arr in ckpt.tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        index.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(data)})
        offset += len(data)
        blobs.append(data)
    header = {
        "config": ckpt.config,
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "extra": ckpt.extra,
        "tensors": index,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(hbytes)) + hbytes + b"".join(blobs)


def from_bytes(buf: bytes) -> Checkpoint:
    if buf[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack("<IQ", buf[8:20])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    header = json.loads(buf[20 : 20 + hlen].decode("utf-8"))
    base = 20 + hlen
    tensors = {}
    for entry in header["tensors"]:
        start = base + entry["offset"]
        raw = buf[start : start + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise CheckpointError(f"truncated payload for {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(entry["shape"])
    return Checkpoint(tensors, header["config"], header["epoch"], header["rng_state"], header.get("extra", {}))


def save(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
