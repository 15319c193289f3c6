"""Waveform container and 16-bit PCM WAV input/output."""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.signal import resample_poly


@dataclass(frozen=True)
class Waveform:
    """A mono audio signal with its sample rate.

    ``samples`` is a 1-D float tensor in nominal [-1, 1] range. Values
    outside that range are allowed in memory; they are clipped only when
    written to 16-bit PCM.
    """

    samples: torch.Tensor
    sample_rate: int

    def __post_init__(self) -> None:
        if self.samples.ndim != 1:
            raise ValueError(f"expected 1-D samples, got shape {tuple(self.samples.shape)}")
        if self.samples.numel() == 0:
            raise ValueError("empty waveform")
        if not self.samples.dtype.is_floating_point:
            raise ValueError(f"expected float samples, got {self.samples.dtype}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        if not torch.isfinite(self.samples).all():
            raise ValueError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.numel()

    @property
    def duration_seconds(self) -> float:
        return len(self) / self.sample_rate

    def numpy(self) -> np.ndarray:
        return self.samples.detach().cpu().numpy()


def read_wav(path: str | Path) -> Waveform:
    """Read a mono 16-bit PCM WAV file."""
    with wave.open(str(path), "rb") as handle:
        channels = handle.getnchannels()
        width = handle.getsampwidth()
        rate = handle.getframerate()
        frames = handle.getnframes()
        if channels != 1:
            raise ValueError(f"{path}: expected mono audio, got {channels} channels")
        if width != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got sample width {width}")
        raw = handle.readframes(frames)
    data = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    return Waveform(torch.from_numpy(data), rate)


def write_wav(path: str | Path, waveform: Waveform) -> None:
    """Write a waveform as mono 16-bit PCM, clipping to [-1, 1]."""
    data = np.clip(waveform.numpy(), -1.0, 1.0)
    pcm = np.round(data * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(waveform.sample_rate)
        handle.writeframes(pcm.tobytes())


def resample(waveform: Waveform, target_rate: int) -> Waveform:
    """Polyphase resampling to ``target_rate``."""
    if target_rate <= 0:
        raise ValueError(f"target rate must be positive, got {target_rate}")
    if target_rate == waveform.sample_rate:
        return waveform
    gcd = math.gcd(waveform.sample_rate, target_rate)
    up = target_rate // gcd
    down = waveform.sample_rate // gcd
    data = resample_poly(waveform.numpy().astype(np.float64), up, down)
    return Waveform(torch.from_numpy(data.astype(np.float32)), target_rate)


def snr_db(reference: torch.Tensor, estimate: torch.Tensor) -> float:
    """Signal-to-noise ratio of ``estimate`` against ``reference`` in dB."""
    if reference.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {tuple(reference.shape)} vs {tuple(estimate.shape)}")
    noise = (reference - estimate).double()
    signal_power = reference.double().square().sum().item()
    noise_power = noise.square().sum().item()
    if noise_power == 0.0:
        return math.inf
    if signal_power == 0.0:
        return -math.inf
    return 10.0 * math.log10(signal_power / noise_power)
