"""Single-file checkpoint container with verifiable, byte-stable layout.

Layout: magic ``SACK``, format version, a canonical JSON header (sorted
keys) describing metadata and an array manifest, then each array's raw
little-endian bytes in manifest order. Writing the same state twice
produces identical bytes, and every array carries its own SHA-256 so a
corrupted or edited file fails loudly at load time.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path
from typing import Any

import numpy as np

_MAGIC = b"SACK"
_VERSION = 1
_PREFIX = struct.Struct("<4sB3xQ")


def _canonical_dtype(array: np.ndarray) -> np.ndarray:
    dtype = array.dtype.newbyteorder("<") if array.dtype.byteorder == ">" else array.dtype
    return np.ascontiguousarray(array, dtype=dtype)


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], meta: dict[str, Any]) -> None:
    """Atomically write metadata and named arrays; key order does not matter."""
    manifest = []
    blobs = []
    for name in sorted(arrays):
        array = _canonical_dtype(np.asarray(arrays[name]))
        raw = array.tobytes()
        manifest.append(
            {
                "name": name,
                "dtype": array.dtype.str,
                "shape": list(array.shape),
                "nbytes": len(raw),
                "sha256": hashlib.sha256(raw).hexdigest(),
            }
        )
        blobs.append(raw)
    header = json.dumps(
        {"meta": meta, "arrays": manifest}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    target = Path(path)
    temp = target.with_name(target.name + ".tmp")
    with open(temp, "wb") as handle:
        handle.write(_PREFIX.pack(_MAGIC, _VERSION, len(header)))
        handle.write(header)
        for raw in blobs:
            handle.write(raw)
    os.replace(temp, target)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    """Read arrays and metadata, verifying every array checksum."""
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise ValueError(f"{path}: truncated before header prefix")
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, not a checkpoint file")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = _PREFIX.size
    if len(data) < offset + header_len:
        raise ValueError(f"{path}: truncated header")
    header = json.loads(data[offset : offset + header_len].decode("utf-8"))
    offset += header_len
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        raw = data[offset : offset + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise ValueError(f"{path}: truncated payload for array {entry['name']!r}")
        if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise ValueError(f"{path}: SHA-256 mismatch for array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"]).copy()
        offset += entry["nbytes"]
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} unexpected trailing bytes")
    return arrays, header["meta"]
