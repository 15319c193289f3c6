"""Latent-to-waveform decoder: ConvNeXt blocks, one attention stage, iSTFT head."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .spectral import ComplexSpectrogram, SpectralConfig, istft_tensor

_MAX_MAGNITUDE = 1e2
_PHASE_FLOOR = 1e-8
_LAYER_SCALE_INIT = 1e-2


@dataclass(frozen=True)
class DecoderConfig:
    """Backbone geometry plus the synthesis transform of the output head.

    The head runs at one frame per latent step: hop equals the encoder's
    total stride and the FFT spans four hops, so a length-T latent sequence
    decodes to exactly T * hop samples.
    """

    latent_dim: int
    width: int
    depth: int
    attention_heads: int
    head: SpectralConfig

    def __post_init__(self) -> None:
        if min(self.latent_dim, self.width, self.depth, self.attention_heads) < 1:
            raise ValueError("latent_dim, width, depth and attention_heads must be positive")
        if self.width % self.attention_heads != 0:
            raise ValueError(f"width {self.width} not divisible by {self.attention_heads} heads")
        if self.head.fft_size != 4 * self.head.hop:
            raise ValueError(
                f"head fft_size {self.head.fft_size} must be 4x its hop {self.head.hop}"
            )


class ConvNeXtBlock(nn.Module):
    """Depthwise conv + pointwise MLP with layer scale and a residual path."""

    def __init__(self, width: int):
        super().__init__()
        self.dwconv = nn.Conv1d(width, width, kernel_size=7, padding=3, groups=width)
        self.norm = nn.LayerNorm(width)
        self.pwconv1 = nn.Linear(width, 4 * width)
        self.pwconv2 = nn.Linear(4 * width, width)
        self.gamma = nn.Parameter(torch.full((width,), _LAYER_SCALE_INIT))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (batch, frames, width)
        h = self.dwconv(x.transpose(1, 2)).transpose(1, 2)
        h = self.pwconv2(torch.nn.functional.gelu(self.pwconv1(self.norm(h))))
        return x + self.gamma * h


class AttentionBlock(nn.Module):
    """Pre-norm full self-attention over the frame axis with a residual path."""

    def __init__(self, width: int, heads: int):
        super().__init__()
        self.norm = nn.LayerNorm(width)
        self.attention = nn.MultiheadAttention(width, heads, batch_first=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm(x)
        h, _ = self.attention(h, h, h, need_weights=False)
        return x + h


class SpectralHead(nn.Module):
    """Projects backbone features to a complex spectrogram.

    Per bin the head emits (log_mag, u, v): magnitude is exp(log_mag)
    clipped at 1e2, and (1 + u, v) is normalized to a unit phasor, so an
    all-zero projection yields exactly 1 + 0j everywhere.
    """

    def __init__(self, width: int, config: SpectralConfig):
        super().__init__()
        self.config = config
        self.proj = nn.Linear(width, 3 * config.bins)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        log_mag, u, v = self.proj(x).chunk(3, dim=-1)
        magnitude = log_mag.exp().clamp(max=_MAX_MAGNITUDE)
        real, imag = 1.0 + u, v
        norm = torch.sqrt(real * real + imag * imag).clamp(min=_PHASE_FLOOR)
        return torch.complex(magnitude * real / norm, magnitude * imag / norm)


class Decoder(nn.Module):
    """Maps (batch, frames, latent_dim) embeddings to (batch, samples) audio."""

    def __init__(self, config: DecoderConfig):
        super().__init__()
        self.config = config
        self.input_proj = nn.Linear(config.latent_dim, config.width)
        blocks: list[nn.Module] = [ConvNeXtBlock(config.width) for _ in range(config.depth)]
        blocks.insert(config.depth // 2, AttentionBlock(config.width, config.attention_heads))
        self.blocks = nn.ModuleList(blocks)
        self.final_norm = nn.LayerNorm(config.width)
        self.head = SpectralHead(config.width, config.head)

    def features(self, e: torch.Tensor) -> torch.Tensor:
        """Backbone features (batch, frames, width) before the head."""
        h = self.input_proj(e)
        for index, block in enumerate(self.blocks):
            h = block(h)
            if not torch.isfinite(h).all():
                raise ValueError(f"non-finite activations after decoder block {index}")
        return self.final_norm(h)

    def spectral_head(self, features: torch.Tensor) -> ComplexSpectrogram:
        """Head output for an unbatched (frames, width) feature sequence."""
        if features.ndim != 2:
            raise ValueError(f"expected (frames, width) features, got {tuple(features.shape)}")
        return ComplexSpectrogram(self.head(features), self.config.head)

    def forward(self, e: torch.Tensor) -> torch.Tensor:
        squeeze = e.ndim == 2
        if squeeze:
            e = e.unsqueeze(0)
        if e.ndim != 3 or e.shape[-1] != self.config.latent_dim:
            raise ValueError(
                f"expected (batch, frames, {self.config.latent_dim}) embeddings, "
                f"got {tuple(e.shape)}"
            )
        if e.shape[1] < 1:
            raise ValueError("cannot decode an empty embedding sequence")
        spec = self.head(self.features(e))
        audio = istft_tensor(spec, self.config.head)
        return audio.squeeze(0) if squeeze else audio
