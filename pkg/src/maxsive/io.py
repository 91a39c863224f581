"""File formats: MXLT latent tensors, mxkey key files, and user registries.

MXLT v1 layout: a 16-byte header (magic ``MXLT``, u8 version=1, u16 height,
u16 width, u16 channels, 5 zero pad bytes, all little-endian) followed by
``channels`` planes of ``height*width`` IEEE-754 float32 values, row-major.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .validation import as_latent

MXLT_MAGIC = b"MXLT"
MXLT_VERSION = 1
_HEADER = struct.Struct("<4sBHHH5x")


def write_latent(path, latent) -> None:
    """Write a (c, h, w) latent tensor as an MXLT v1 file."""
    z = as_latent(latent)
    c, h, w = z.shape
    if max(h, w, c) > 0xFFFF:
        raise ShapeError("MXLT dimensions are limited to 16 bits")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MXLT_MAGIC, MXLT_VERSION, h, w, c))
        fh.write(np.ascontiguousarray(z, dtype="<f4").tobytes())


def read_latent(path) -> np.ndarray:
    """Read an MXLT v1 file into a (c, h, w) float64 tensor."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ShapeError(f"{path}: truncated MXLT header")
    magic, version, h, w, c = _HEADER.unpack_from(raw)
    if magic != MXLT_MAGIC:
        raise ShapeError(f"{path}: bad magic {magic!r}")
    if version != MXLT_VERSION:
        raise ShapeError(f"{path}: unsupported MXLT version {version}")
    expected = _HEADER.size + 4 * h * w * c
    if len(raw) != expected:
        raise ShapeError(f"{path}: expected {expected} bytes, found {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return flat.reshape(c, h, w).astype(np.float64)


def save_key(path, spec) -> None:
    """Write a KeySpec as an mxkey v1 JSON file."""
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
        fh.write("\n")


def load_key(path):
    from .codec import KeySpec

    with open(path) as fh:
        data = json.load(fh)
    return KeySpec.from_dict(data)


def save_registry(path, entries) -> None:
    """Write a registry: a JSON array of {user_id, master_seed} objects."""
    payload = [{"user_id": int(uid), "master_seed": seed} for uid, seed in entries]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_registry(path) -> list[tuple[int, str]]:
    with open(path) as fh:
        data = json.load(fh)
    entries = [(int(item["user_id"]), str(item["master_seed"])) for item in data]
    ids = [uid for uid, _ in entries]
    if len(set(ids)) != len(ids):
        raise ShapeError(f"{path}: duplicate user ids")
    seeds = [seed for _, seed in entries]
    if len(set(seeds)) != len(seeds):
        raise ShapeError(f"{path}: duplicate master seeds")
    return sorted(entries)
