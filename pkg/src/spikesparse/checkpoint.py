"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"SPKSPRS\\0"            8-byte magic
    uint32                  format version
    uint64                  header length H
    H bytes                 UTF-8 JSON header
    payload                 concatenated float64 LE tensor values
    uint32                  CRC-32 of every preceding byte

The header holds the training config, generator state, epoch, metrics
history and a table of named tensors (name, shape, offset, count).
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SPKSPRS\x00"
VERSION = 1


class CheckpointError(ValueError):
    """Corrupt, incompatible or mismatched checkpoint."""


@dataclass
class Checkpoint:
    config: dict
    input_shape: tuple[int, ...]
    n_classes: int
    epoch: int
    weights: dict[str, np.ndarray]
    optimizer_steps: int = 0
    optimizer_state: dict[str, np.ndarray] = field(default_factory=dict)
    rng_state: dict | None = None
    history: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)     # dataset / split provenance
    best: "Checkpoint | None" = None

    @property
    def architecture(self) -> str:
        return self.config["architecture"]


def _tensor_table(prefix: str, arrays: dict[str, np.ndarray], table: list, chunks: list, offset: int) -> int:
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        table.append({"name": prefix + name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.size
    return offset


def _meta(ckpt: Checkpoint) -> dict:
    return {
        "config": ckpt.config,
        "input_shape": list(ckpt.input_shape),
        "n_classes": ckpt.n_classes,
        "epoch": ckpt.epoch,
        "optimizer_steps": ckpt.optimizer_steps,
        "rng_state": ckpt.rng_state,
        "history": ckpt.history,
        "extra": ckpt.extra,
    }


def to_bytes(ckpt: Checkpoint) -> bytes:
    table: list[dict] = []
    chunks: list[bytes] = []
    offset = _tensor_table("weights/", ckpt.weights, table, chunks, 0)
    offset = _tensor_table("optim/", ckpt.optimizer_state, table, chunks, offset)
    header = _meta(ckpt)
    if ckpt.best is not None:
        header["best"] = _meta(ckpt.best)
        offset = _tensor_table("best.weights/", ckpt.best.weights, table, chunks, offset)
        _tensor_table("best.optim/", ckpt.best.optimizer_state, table, chunks, offset)
    header["tensors"] = table
    head = json.dumps(header, sort_keys=True).encode()
    body = MAGIC + struct.pack("<IQ", VERSION, len(head)) + head + b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body))


def from_bytes(raw: bytes, source: str = "<bytes>") -> Checkpoint:
    if len(raw) < 24 or raw[:8] != MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint file (bad magic or truncated)")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise CheckpointError(f"{source}: checkpoint version {version}, expected {VERSION}")
    (crc,) = struct.unpack("<I", raw[-4:])
    if 20 + hlen > len(raw) - 4 or zlib.crc32(raw[:-4]) != crc:
        raise CheckpointError(f"{source}: corrupt checkpoint (truncated or checksum mismatch)")
    try:
        header = json.loads(raw[20:20 + hlen])
    except ValueError as exc:
        raise CheckpointError(f"{source}: corrupt checkpoint header") from exc
    payload = np.frombuffer(raw, dtype="<f8", offset=20 + hlen, count=(len(raw) - 24 - hlen) // 8)
    groups: dict[str, dict[str, np.ndarray]] = {}
    for entry in header["tensors"]:
        group, name = entry["name"].split("/", 1)
        start, count = entry["offset"], entry["count"]
        if start + count > payload.size or int(np.prod(entry["shape"])) != count:
            raise CheckpointError(f"{source}: tensor {entry['name']} out of bounds")
        groups.setdefault(group, {})[name] = payload[start:start + count].reshape(entry["shape"]).astype(np.float64)

    def build(meta, wkey, okey):
        return Checkpoint(
            config=meta["config"], input_shape=tuple(meta["input_shape"]), n_classes=meta["n_classes"],
            epoch=meta["epoch"], weights=groups.get(wkey, {}), optimizer_steps=meta["optimizer_steps"],
            optimizer_state=groups.get(okey, {}), rng_state=meta["rng_state"], history=meta["history"],
            extra=meta.get("extra", {}))

    ckpt = build(header, "weights", "optim")
    if "best" in header:
        ckpt.best = build(header["best"], "best.weights", "best.optim")
    return ckpt


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    tmp.replace(path)


def load_checkpoint(path, expect_architecture: str | None = None) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    ckpt = from_bytes(path.read_bytes(), str(path))
    if expect_architecture is not None and ckpt.architecture != expect_architecture:
        raise CheckpointError(
            f"{path}: architecture {ckpt.architecture!r} does not match {expect_architecture!r}")
    return ckpt
