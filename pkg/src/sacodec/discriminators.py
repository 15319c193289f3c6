"""Waveform discriminator ensemble: period-folded and banded STFT critics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .spectral import SpectralConfig, stft_tensor

_LEAKY_SLOPE = 0.1
_NUM_BANDS = 5


@dataclass(frozen=True)
class DiscriminatorConfig:
    """Ensemble layout; channel counts trade fidelity for desk-scale speed."""

    sample_rate: int
    periods: tuple[int, ...] = (2, 3, 5, 7, 11)
    fft_sizes: tuple[int, ...] = (512, 1024, 2048)
    period_channels: tuple[int, ...] = (16, 32, 64)
    band_channels: int = 16

    def __post_init__(self) -> None:
        if not self.periods or any(p < 1 for p in self.periods):
            raise ValueError(f"periods must be positive, got {self.periods}")
        if not self.fft_sizes or any(n < 4 for n in self.fft_sizes):
            raise ValueError(f"fft_sizes must be >= 4, got {self.fft_sizes}")

    @property
    def min_input_length(self) -> int:
        return 2 * max(self.periods)


@dataclass
class DiscriminatorOutput:
    """Logits and per-layer features for every sub-discriminator."""

    logits: list[torch.Tensor] = field(default_factory=list)
    features: list[list[torch.Tensor]] = field(default_factory=list)

    @property
    def num_discriminators(self) -> int:
        return len(self.logits)


class PeriodDiscriminator(nn.Module):
    """2-D critic over the waveform folded to (frames, period)."""

    def __init__(self, period: int, channels: tuple[int, ...]):
        super().__init__()
        self.period = period
        convs = []
        previous = 1
        for out in channels:
            convs.append(nn.Conv2d(previous, out, (5, 1), stride=(3, 1), padding=(2, 0)))
            previous = out
        self.convs = nn.ModuleList(convs)
        self.post = nn.Conv2d(previous, 1, (3, 1), padding=(1, 0))

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        batch, length = x.shape
        remainder = length % self.period
        h = x.unsqueeze(1)
        if remainder:
            h = F.pad(h, (0, self.period - remainder), mode="reflect")
        h = h.view(batch, 1, -1, self.period)
        features = []
        for conv in self.convs:
            h = F.leaky_relu(conv(h), _LEAKY_SLOPE)
            features.append(h)
        h = self.post(h)
        features.append(h)
        return h.flatten(1), features


class BandSpectrogramDiscriminator(nn.Module):
    """2-D critic over the complex STFT, one conv stack per frequency band."""

    def __init__(self, fft_size: int, sample_rate: int, channels: int):
        super().__init__()
        self.spec_config = SpectralConfig(
            fft_size=fft_size, hop=fft_size // 4, mel_bins=1, sample_rate=sample_rate
        )
        self.band_edges = np.cumsum(
            [len(b) for b in np.array_split(np.arange(self.spec_config.bins), _NUM_BANDS)]
        )[:-1].tolist()
        self.band_convs = nn.ModuleList()
        for _ in range(_NUM_BANDS):
            self.band_convs.append(
                nn.ModuleList(
                    [
                        nn.Conv2d(2, channels, (3, 9), stride=(1, 2), padding=(1, 4)),
                        nn.Conv2d(channels, channels, (3, 9), stride=(1, 2), padding=(1, 4)),
                        nn.Conv2d(channels, channels, (3, 3), padding=(1, 1)),
                    ]
                )
            )
        self.posts = nn.ModuleList(
            nn.Conv2d(channels, 1, (3, 3), padding=(1, 1)) for _ in range(_NUM_BANDS)
        )

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        spec = stft_tensor(x, self.spec_config)
        grid = torch.stack([spec.real, spec.imag], dim=1)  # (batch, 2, frames, bins)
        bands = torch.tensor_split(grid, self.band_edges, dim=-1)
        features, logits = [], []
        for band, convs, post in zip(bands, self.band_convs, self.posts):
            h = band
            for conv in convs:
                h = F.leaky_relu(conv(h), _LEAKY_SLOPE)
                features.append(h)
            h = post(h)
            features.append(h)
            logits.append(h.flatten(1))
        return torch.cat(logits, dim=1), features


class DiscriminatorEnsemble(nn.Module):
    """All period and spectrogram critics behind a single forward call."""

    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        self.period_discriminators = nn.ModuleList(
            PeriodDiscriminator(p, config.period_channels) for p in config.periods
        )
        self.band_discriminators = nn.ModuleList(
            BandSpectrogramDiscriminator(n, config.sample_rate, config.band_channels)
            for n in config.fft_sizes
        )

    def forward(self, x: torch.Tensor) -> DiscriminatorOutput:
        if x.ndim == 1:
            x = x.unsqueeze(0)
        if x.ndim != 2:
            raise ValueError(f"expected (samples,) or (batch, samples), got {tuple(x.shape)}")
        if x.shape[-1] < self.config.min_input_length:
            raise ValueError(
                f"input length {x.shape[-1]} below minimum {self.config.min_input_length}"
            )
        output = DiscriminatorOutput()
        for disc in list(self.period_discriminators) + list(self.band_discriminators):
            logits, features = disc(x)
            output.logits.append(logits)
            output.features.append(features)
        return output
