"""Token container and the .sact wire format.

Header (38 bytes, little-endian): magic ``SACT``, version byte, reserved
byte, sample rate u32, frame rate u32, semantic and residual codebook
sizes u16 each, frame count u32, original sample count u64, then 8 bytes
of model checksum. The payload packs, per frame, the semantic index then
the residual index, each in ceil(log2 K) bits MSB-first; a single-code
stream occupies zero bits, and the final byte is zero-padded.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MAGIC = b"SACT"
_VERSION = 1
_HEADER = struct.Struct("<4sBBIIHHIQ8s")


def stream_bits(num_codes: int) -> int:
    """Bits per token for a codebook of ``num_codes`` entries; 1 code needs 0."""
    if num_codes < 1:
        raise ValueError(f"num_codes must be positive, got {num_codes}")
    return math.ceil(math.log2(num_codes)) if num_codes > 1 else 0


@dataclass(frozen=True)
class TokenSequence:
    """Both token streams for one clip plus everything needed to decode them."""

    sample_rate: int
    frame_rate: int
    num_semantic_codes: int
    num_residual_codes: int
    semantic_indices: np.ndarray
    residual_indices: np.ndarray
    original_length: int
    model_checksum: bytes

    def __post_init__(self) -> None:
        semantic = np.ascontiguousarray(self.semantic_indices, dtype=np.int64)
        residual = np.ascontiguousarray(self.residual_indices, dtype=np.int64)
        object.__setattr__(self, "semantic_indices", semantic)
        object.__setattr__(self, "residual_indices", residual)
        if semantic.ndim != 1 or semantic.shape != residual.shape:
            raise ValueError(
                f"index streams must be equal-length 1-D, got "
                f"{semantic.shape} and {residual.shape}"
            )
        if semantic.shape[0] < 1:
            raise ValueError("empty token sequence")
        if self.sample_rate <= 0 or self.frame_rate <= 0:
            raise ValueError("sample_rate and frame_rate must be positive")
        for name, num, values in (
            ("semantic", self.num_semantic_codes, semantic),
            ("residual", self.num_residual_codes, residual),
        ):
            if not 1 <= num <= 0xFFFF:
                raise ValueError(f"{name} codebook size {num} outside [1, 65535]")
            if values.min() < 0 or values.max() >= num:
                bad = int(np.argmax((values < 0) | (values >= num)))
                raise ValueError(f"{name} index out of range [0, {num}) at frame {bad}")
        if not 1 <= self.original_length <= 0xFFFFFFFFFFFFFFFF:
            raise ValueError(f"original_length {self.original_length} outside u64 range")
        if semantic.shape[0] > 0xFFFFFFFF:
            raise ValueError("frame count exceeds u32 range")
        if len(self.model_checksum) != 8:
            raise ValueError(f"model checksum must be 8 bytes, got {len(self.model_checksum)}")

    @property
    def num_frames(self) -> int:
        return self.semantic_indices.shape[0]

    @property
    def bits_per_frame(self) -> int:
        return stream_bits(self.num_semantic_codes) + stream_bits(self.num_residual_codes)

    @property
    def nominal_kbps(self) -> float:
        return self.frame_rate * self.bits_per_frame / 1000.0


def _indices_to_bits(values: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((values[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def pack_tokens(sequence: TokenSequence) -> bytes:
    """Serialize to the .sact byte layout."""
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        0,
        sequence.sample_rate,
        sequence.frame_rate,
        sequence.num_semantic_codes,
        sequence.num_residual_codes,
        sequence.num_frames,
        sequence.original_length,
        sequence.model_checksum,
    )
    bits = np.concatenate(
        [
            _indices_to_bits(sequence.semantic_indices, stream_bits(sequence.num_semantic_codes)),
            _indices_to_bits(sequence.residual_indices, stream_bits(sequence.num_residual_codes)),
        ],
        axis=1,
    ).reshape(-1)
    payload = np.packbits(bits).tobytes() if bits.size else b""
    return header + payload


def unpack_tokens(data: bytes) -> TokenSequence:
    """Parse .sact bytes, validating structure and index ranges."""
    if len(data) < _HEADER.size:
        raise ValueError(f"truncated header: {len(data)} bytes, need {_HEADER.size}")
    magic, version, _, sample_rate, frame_rate, k1, k2, num_frames, original_length, checksum = (
        _HEADER.unpack_from(data)
    )
    if magic != _MAGIC:
        raise ValueError(f"bad magic {magic!r} at offset 0, not a token file")
    if version != _VERSION:
        raise ValueError(f"unsupported format version {version}")
    if num_frames < 1:
        raise ValueError("header declares zero frames")
    if k1 < 1 or k2 < 1:
        raise ValueError(f"header declares empty codebook (sizes {k1}, {k2})")
    width1, width2 = stream_bits(k1), stream_bits(k2)
    per_frame = width1 + width2
    expected_payload = -(-num_frames * per_frame // 8)
    actual_payload = len(data) - _HEADER.size
    if actual_payload != expected_payload:
        raise ValueError(
            f"payload is {actual_payload} bytes at offset {_HEADER.size}, "
            f"expected {expected_payload} for {num_frames} frames"
        )
    if per_frame:
        raw = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
        bits = np.unpackbits(raw)[: num_frames * per_frame].reshape(num_frames, per_frame)
        weights1 = 1 << np.arange(width1 - 1, -1, -1, dtype=np.int64)
        weights2 = 1 << np.arange(width2 - 1, -1, -1, dtype=np.int64)
        semantic = bits[:, :width1].astype(np.int64) @ weights1 if width1 else np.zeros(num_frames, np.int64)
        residual = bits[:, width1:].astype(np.int64) @ weights2 if width2 else np.zeros(num_frames, np.int64)
    else:
        semantic = np.zeros(num_frames, np.int64)
        residual = np.zeros(num_frames, np.int64)
    for name, num, values in (("semantic", k1, semantic), ("residual", k2, residual)):
        if values.size and values.max() >= num:
            bad = int(np.argmax(values >= num))
            raise ValueError(f"{name} index {int(values[bad])} >= {num} at frame {bad}")
    return TokenSequence(
        sample_rate=sample_rate,
        frame_rate=frame_rate,
        num_semantic_codes=k1,
        num_residual_codes=k2,
        semantic_indices=semantic,
        residual_indices=residual,
        original_length=original_length,
        model_checksum=checksum,
    )


def write_sact(path: str | Path, sequence: TokenSequence) -> None:
    """Atomic write: the target never holds a partial file."""
    target = Path(path)
    temp = target.with_name(target.name + ".tmp")
    temp.write_bytes(pack_tokens(sequence))
    os.replace(temp, target)


def read_sact(path: str | Path) -> TokenSequence:
    return unpack_tokens(Path(path).read_bytes())
