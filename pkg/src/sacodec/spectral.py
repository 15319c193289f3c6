"""STFT analysis/synthesis and log-mel features.

Framing convention: a length-L signal at hop h yields exactly
``ceil(L / h)`` frames. The signal is zero-padded on the right to a whole
number of hops, then padded by half the FFT size on both sides so frame t
is centered on sample ``t * h``. The inverse applies the same window for
synthesis and divides by the per-sample sum of squared windows, so
analysis followed by synthesis reconstructs the padded signal to machine
precision regardless of hop/FFT combination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch
import torch.nn.functional as F
from scipy.signal import check_COLA, get_window

from .audio import Waveform

_WSQ_FLOOR = 1e-11
_LOG_MEL_FLOOR = 1e-5


@dataclass(frozen=True)
class SpectralConfig:
    """Analysis parameters for one STFT/mel scale."""

    fft_size: int
    hop: int
    mel_bins: int
    sample_rate: int
    fmin: float = 0.0
    fmax: float | None = None

    def __post_init__(self) -> None:
        if self.fft_size < 2 or self.fft_size % 2 != 0:
            raise ValueError(f"fft_size must be even and >= 2, got {self.fft_size}")
        if not 1 <= self.hop <= self.fft_size:
            raise ValueError(f"hop must be in [1, fft_size], got {self.hop}")
        if self.mel_bins < 1:
            raise ValueError(f"mel_bins must be >= 1, got {self.mel_bins}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.fmax is None:
            object.__setattr__(self, "fmax", self.sample_rate / 2.0)
        if not 0.0 <= self.fmin < self.fmax or self.fmax > self.sample_rate / 2.0:
            raise ValueError(f"need 0 <= fmin < fmax <= sample_rate/2, got [{self.fmin}, {self.fmax}]")
        window = get_window("hann", self.fft_size, fftbins=True)
        if not check_COLA(window, self.fft_size, self.fft_size - self.hop):
            raise ValueError(f"hop {self.hop} violates COLA for fft_size {self.fft_size}")

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class ComplexSpectrogram:
    """STFT frames (frames, bins) with the config that produced them."""

    frames: torch.Tensor
    config: SpectralConfig

    def __post_init__(self) -> None:
        if self.frames.ndim != 2 or self.frames.shape[1] != self.config.bins:
            raise ValueError(
                f"expected (frames, {self.config.bins}) spectrogram, got {tuple(self.frames.shape)}"
            )
        if not self.frames.is_complex():
            raise ValueError(f"expected complex frames, got {self.frames.dtype}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def frame_count(num_samples: int, hop: int) -> int:
    """Number of frames for a signal of ``num_samples`` at the given hop."""
    if num_samples < 1:
        raise ValueError(f"need at least one sample, got {num_samples}")
    return -(-num_samples // hop)


@lru_cache(maxsize=None)
def _window(fft_size: int, dtype: torch.dtype) -> torch.Tensor:
    return torch.hann_window(fft_size, periodic=True, dtype=dtype)


def _pad_centered(x: torch.Tensor, pad: int) -> torch.Tensor:
    # Reflection needs more than `pad` samples; very short inputs fall
    # back to zeros, which keeps the transform linear either way.
    if x.shape[-1] > pad:
        return F.pad(x, (pad, pad), mode="reflect")
    return F.pad(x, (pad, pad), mode="constant", value=0.0)


def stft_tensor(x: torch.Tensor, config: SpectralConfig) -> torch.Tensor:
    """STFT of a (..., samples) tensor as complex (..., frames, bins)."""
    if x.shape[-1] < 1:
        raise ValueError("cannot transform an empty signal")
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    num_frames = frame_count(flat.shape[-1], config.hop)
    total = num_frames * config.hop
    flat = F.pad(flat, (0, total - flat.shape[-1]))
    pad = config.fft_size // 2
    flat = _pad_centered(flat, pad)
    frames = flat.unfold(-1, config.fft_size, config.hop)[:, :num_frames]
    window = _window(config.fft_size, x.dtype).to(x.device)
    spec = torch.fft.rfft(frames * window, n=config.fft_size, dim=-1)
    return spec.reshape(*lead, num_frames, config.bins)


def istft_tensor(spec: torch.Tensor, config: SpectralConfig) -> torch.Tensor:
    """Inverse of :func:`stft_tensor`; returns (..., frames * hop) samples."""
    if spec.ndim < 2 or spec.shape[-1] != config.bins:
        raise ValueError(f"expected (..., frames, {config.bins}), got {tuple(spec.shape)}")
    if not spec.is_complex():
        raise ValueError(f"expected complex spectrogram, got {spec.dtype}")
    lead = spec.shape[:-2]
    num_frames = spec.shape[-2]
    flat = spec.reshape(-1, num_frames, config.bins)
    real_dtype = flat.real.dtype
    window = _window(config.fft_size, real_dtype).to(spec.device)
    segments = torch.fft.irfft(flat, n=config.fft_size, dim=-1) * window
    pad = config.fft_size // 2
    padded_len = (num_frames - 1) * config.hop + config.fft_size
    stacked = segments.transpose(1, 2)
    summed = F.fold(
        stacked,
        output_size=(1, padded_len),
        kernel_size=(1, config.fft_size),
        stride=(1, config.hop),
    ).reshape(-1, padded_len)
    wsq = (window * window).expand(num_frames, -1).T.unsqueeze(0)
    norm = F.fold(
        wsq,
        output_size=(1, padded_len),
        kernel_size=(1, config.fft_size),
        stride=(1, config.hop),
    ).reshape(padded_len)
    out = summed / norm.clamp(min=_WSQ_FLOOR)
    out = out[:, pad : pad + num_frames * config.hop]
    if out.shape[-1] < num_frames * config.hop:
        out = F.pad(out, (0, num_frames * config.hop - out.shape[-1]))
    return out.reshape(*lead, num_frames * config.hop)


def _hz_to_mel(hz: np.ndarray) -> np.ndarray:
    hz = np.asarray(hz, dtype=np.float64)
    f_sp = 200.0 / 3.0
    min_log_hz = 1000.0
    logstep = math.log(6.4) / 27.0
    mel = hz / f_sp
    above = hz >= min_log_hz
    mel = np.where(above, min_log_hz / f_sp + np.log(np.maximum(hz, min_log_hz) / min_log_hz) / logstep, mel)
    return mel


def _mel_to_hz(mel: np.ndarray) -> np.ndarray:
    mel = np.asarray(mel, dtype=np.float64)
    f_sp = 200.0 / 3.0
    min_log_mel = 1000.0 / f_sp
    logstep = math.log(6.4) / 27.0
    hz = mel * f_sp
    above = mel >= min_log_mel
    return np.where(above, 1000.0 * np.exp(logstep * (mel - min_log_mel)), hz)


@lru_cache(maxsize=None)
def _mel_filterbank_cached(config: SpectralConfig) -> torch.Tensor:
    edges = _mel_to_hz(np.linspace(_hz_to_mel(config.fmin), _hz_to_mel(config.fmax), config.mel_bins + 2))
    freqs = np.linspace(0.0, config.sample_rate / 2.0, config.bins)
    lower = (freqs[None, :] - edges[:-2, None]) / (edges[1:-1] - edges[:-2])[:, None]
    upper = (edges[2:, None] - freqs[None, :]) / (edges[2:] - edges[1:-1])[:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]
    if not (weights.max(axis=1) > 0.0).all():
        empty = int(np.argmin(weights.max(axis=1)))
        raise ValueError(
            f"mel filter {empty} has no FFT bin support (fft_size {config.fft_size}, "
            f"mel_bins {config.mel_bins}, sample_rate {config.sample_rate})"
        )
    return torch.from_numpy(weights)


def mel_filterbank(config: SpectralConfig, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Area-normalized triangular mel filters as a (mel_bins, bins) matrix."""
    return _mel_filterbank_cached(config).to(dtype)


def log_mel_tensor(x: torch.Tensor, config: SpectralConfig) -> torch.Tensor:
    """Log-compressed mel power of a (..., samples) tensor: (..., frames, mel_bins)."""
    power = stft_tensor(x, config).abs().square()
    filterbank = mel_filterbank(config, power.dtype).to(power.device)
    mel = power @ filterbank.T
    return mel.clamp(min=_LOG_MEL_FLOOR).log()


def stft(waveform: Waveform, config: SpectralConfig) -> ComplexSpectrogram:
    _check_rate(waveform, config)
    return ComplexSpectrogram(stft_tensor(waveform.samples, config), config)


def istft(spectrogram: ComplexSpectrogram) -> Waveform:
    samples = istft_tensor(spectrogram.frames, spectrogram.config)
    return Waveform(samples, spectrogram.config.sample_rate)


def log_mel(waveform: Waveform, config: SpectralConfig) -> torch.Tensor:
    _check_rate(waveform, config)
    return log_mel_tensor(waveform.samples, config)


def _check_rate(waveform: Waveform, config: SpectralConfig) -> None:
    if waveform.sample_rate != config.sample_rate:
        raise ValueError(
            f"waveform rate {waveform.sample_rate} does not match config rate {config.sample_rate}"
        )
