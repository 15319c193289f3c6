"""File-level encode and decode built on a trained checkpoint."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import torch

from .audio import Waveform, read_wav, resample, write_wav
from .bitstream import TokenSequence, read_sact, write_sact
from .model import SACodec, model_checksum


def encode_waveform(model: SACodec, waveform: Waveform) -> TokenSequence:
    """Tokenize a waveform already at the model's sample rate."""
    if waveform.sample_rate != model.config.sample_rate:
        raise ValueError(
            f"input rate {waveform.sample_rate} does not match model rate "
            f"{model.config.sample_rate}; pass resample=True to convert"
        )
    semantic, residual = model.encode_indices(waveform)
    return TokenSequence(
        sample_rate=model.config.sample_rate,
        frame_rate=model.frame_rate,
        num_semantic_codes=model.quantizer.num_semantic_codes,
        num_residual_codes=model.quantizer.num_residual_codes,
        semantic_indices=semantic.numpy(),
        residual_indices=residual.numpy(),
        original_length=len(waveform),
        model_checksum=model_checksum(model),
    )


def decode_tokens(
    model: SACodec, sequence: TokenSequence, override_checksum: bool = False
) -> Waveform:
    """Reconstruct audio from a token sequence, trimmed to the stored length."""
    if sequence.model_checksum != model_checksum(model) and not override_checksum:
        raise ValueError(
            "token stream was produced by a different model "
            "(checksum mismatch); pass override_checksum=True to decode anyway"
        )
    expected = (sequence.num_semantic_codes, sequence.num_residual_codes)
    actual = (model.quantizer.num_semantic_codes, model.quantizer.num_residual_codes)
    if expected != actual:
        raise ValueError(f"stream codebook sizes {expected} do not match model {actual}")
    if sequence.sample_rate != model.config.sample_rate:
        raise ValueError(
            f"stream rate {sequence.sample_rate} does not match model rate "
            f"{model.config.sample_rate}"
        )
    decoded = model.decode_indices(
        torch.from_numpy(sequence.semantic_indices),
        torch.from_numpy(sequence.residual_indices),
    )
    length = min(sequence.original_length, len(decoded))
    return Waveform(decoded.samples[:length], decoded.sample_rate)


def encode_file(
    model: SACodec,
    audio_path: str | Path,
    out_path: str | Path,
    allow_resample: bool = False,
) -> dict[str, Any]:
    """WAV to .sact; returns a small summary of what was written."""
    waveform = read_wav(audio_path)
    if waveform.sample_rate != model.config.sample_rate:
        if not allow_resample:
            raise ValueError(
                f"{audio_path}: rate {waveform.sample_rate} != model rate "
                f"{model.config.sample_rate}; rerun with --resample"
            )
        waveform = resample(waveform, model.config.sample_rate)
    sequence = encode_waveform(model, waveform)
    write_sact(out_path, sequence)
    return {
        "input": str(audio_path),
        "output": str(out_path),
        "num_frames": sequence.num_frames,
        "bits_per_frame": sequence.bits_per_frame,
        "nominal_kbps": sequence.nominal_kbps,
        "duration_seconds": waveform.duration_seconds,
        "file_bytes": Path(out_path).stat().st_size,
    }


def decode_file(
    model: SACodec,
    sact_path: str | Path,
    out_path: str | Path,
    override_checksum: bool = False,
) -> dict[str, Any]:
    """.sact to WAV; returns a small summary of what was written."""
    sequence = read_sact(sact_path)
    waveform = decode_tokens(model, sequence, override_checksum=override_checksum)
    write_wav(out_path, waveform)
    return {
        "input": str(sact_path),
        "output": str(out_path),
        "num_frames": sequence.num_frames,
        "samples": len(waveform),
        "sample_rate": waveform.sample_rate,
    }
