"""Strided convolutional encoder producing a low-rate latent sequence."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .audio import Waveform


@dataclass(frozen=True)
class EncoderConfig:
    """Geometry of the downsampling stack.

    ``channel_schedule`` has one entry for the initial convolution plus one
    per strided stage, so its length is ``len(stride_schedule) + 1``.
    """

    sample_rate: int
    stride_schedule: tuple[int, ...]
    channel_schedule: tuple[int, ...]
    recurrent_hidden: int
    latent_dim: int

    def __post_init__(self) -> None:
        if len(self.channel_schedule) != len(self.stride_schedule) + 1:
            raise ValueError(
                f"channel_schedule needs {len(self.stride_schedule) + 1} entries, "
                f"got {len(self.channel_schedule)}"
            )
        if any(s < 1 for s in self.stride_schedule) or not self.stride_schedule:
            raise ValueError(f"strides must be positive, got {self.stride_schedule}")
        if any(c < 1 for c in self.channel_schedule):
            raise ValueError(f"channels must be positive, got {self.channel_schedule}")
        if self.recurrent_hidden < 1 or self.latent_dim < 1:
            raise ValueError("recurrent_hidden and latent_dim must be positive")
        if self.recurrent_hidden != self.channel_schedule[-1]:
            raise ValueError(
                f"recurrent_hidden {self.recurrent_hidden} must match the last "
                f"conv channel {self.channel_schedule[-1]} for the residual connection"
            )
        if self.sample_rate % self.total_stride != 0:
            raise ValueError(
                f"sample_rate {self.sample_rate} is not a multiple of total stride {self.total_stride}"
            )

    @property
    def total_stride(self) -> int:
        return math.prod(self.stride_schedule)

    @property
    def frame_rate(self) -> int:
        return self.sample_rate // self.total_stride


def output_length(num_samples: int, config: EncoderConfig) -> int:
    """Latent frames produced for an input of ``num_samples``."""
    if num_samples < 1:
        raise ValueError(f"need at least one sample, got {num_samples}")
    return -(-num_samples // config.total_stride)


class Encoder(nn.Module):
    """Maps (batch, samples) waveforms to (batch, frames, latent_dim) latents.

    Each strided stage uses kernel 2*stride with total padding kernel-stride
    split as evenly as possible, so a stage divides the length exactly by
    its stride. Inputs are zero-padded on the right to a whole number of
    latent frames first.
    """

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        channels = config.channel_schedule
        self.input_conv = nn.Conv1d(1, channels[0], kernel_size=7, padding=3)
        self.stage_convs = nn.ModuleList(
            nn.Conv1d(channels[i], channels[i + 1], kernel_size=2 * stride, stride=stride)
            for i, stride in enumerate(config.stride_schedule)
        )
        self.recurrent = nn.LSTM(
            channels[-1], config.recurrent_hidden, num_layers=2, batch_first=True
        )
        self.output_proj = nn.Linear(config.recurrent_hidden, config.latent_dim)
        with torch.no_grad():
            # start latents near unit row norm so they engage the quantizer
            # codebooks from the first step instead of clustering at zero
            self.output_proj.weight.mul_(4.0)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        squeeze = x.ndim == 1
        if squeeze:
            x = x.unsqueeze(0)
        if x.ndim != 2:
            raise ValueError(f"expected (samples,) or (batch, samples), got {tuple(x.shape)}")
        if x.shape[-1] < 1:
            raise ValueError("cannot encode an empty signal")
        total = output_length(x.shape[-1], self.config) * self.config.total_stride
        h = F.pad(x, (0, total - x.shape[-1])).unsqueeze(1)
        h = self.input_conv(h)
        for conv, stride in zip(self.stage_convs, self.config.stride_schedule):
            pad = conv.kernel_size[0] - stride
            h = conv(F.pad(F.elu(h), (pad // 2, pad - pad // 2)))
        h = h.transpose(1, 2)
        recurrent, _ = self.recurrent(h)
        h = self.output_proj(h + recurrent)
        return h.squeeze(0) if squeeze else h

    @torch.no_grad()
    def encode(self, waveform: Waveform) -> torch.Tensor:
        """Eval-mode latents (frames, latent_dim) for a waveform."""
        if waveform.sample_rate != self.config.sample_rate:
            raise ValueError(
                f"waveform rate {waveform.sample_rate} does not match "
                f"encoder rate {self.config.sample_rate}"
            )
        was_training = self.training
        self.eval()
        try:
            dtype = self.output_proj.weight.dtype
            return self.forward(waveform.samples.to(dtype))
        finally:
            self.train(was_training)
