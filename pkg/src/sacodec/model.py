"""Full codec assembly and its two built-in size profiles."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Any

import torch
import torch.nn.functional as F
from torch import nn

from .audio import Waveform
from .decoder import Decoder, DecoderConfig
from .encoder import Encoder, EncoderConfig
from .quantizer import DualQuantizer, QuantizationResult, ResidualActivator, SemanticAnchor
from .spectral import SpectralConfig

PROFILES = ("paper", "tiny")


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to rebuild a codec with identical shapes."""

    profile: str
    sample_rate: int
    stride_schedule: tuple[int, ...]
    channel_schedule: tuple[int, ...]
    recurrent_hidden: int
    latent_dim: int
    decoder_width: int
    decoder_depth: int
    attention_heads: int
    semantic_codes: int
    semantic_dim: int
    residual_codes: int
    residual_coeff_dim: int
    semantic_mode: str = "projected"
    residual_mode: str = "simvq"
    use_semantic: bool = True
    use_residual: bool = True

    def __post_init__(self) -> None:
        if not self.use_semantic and not self.use_residual:
            raise ValueError("cannot disable both quantizer stages")
        if self.semantic_mode not in ("projected", "direct", "learnable"):
            raise ValueError(f"unknown semantic mode {self.semantic_mode!r}")
        if self.residual_mode not in ("simvq", "learnable"):
            raise ValueError(f"unknown residual mode {self.residual_mode!r}")

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(
            sample_rate=self.sample_rate,
            stride_schedule=self.stride_schedule,
            channel_schedule=self.channel_schedule,
            recurrent_hidden=self.recurrent_hidden,
            latent_dim=self.latent_dim,
        )

    @property
    def decoder(self) -> DecoderConfig:
        stride = self.encoder.total_stride
        head = SpectralConfig(
            fft_size=4 * stride, hop=stride, mel_bins=1, sample_rate=self.sample_rate
        )
        return DecoderConfig(
            latent_dim=self.latent_dim,
            width=self.decoder_width,
            depth=self.decoder_depth,
            attention_heads=self.attention_heads,
            head=head,
        )

    @property
    def frame_rate(self) -> int:
        return self.encoder.frame_rate

    def to_dict(self) -> dict[str, Any]:
        return {
            "profile": self.profile,
            "sample_rate": self.sample_rate,
            "stride_schedule": list(self.stride_schedule),
            "channel_schedule": list(self.channel_schedule),
            "recurrent_hidden": self.recurrent_hidden,
            "latent_dim": self.latent_dim,
            "decoder_width": self.decoder_width,
            "decoder_depth": self.decoder_depth,
            "attention_heads": self.attention_heads,
            "semantic_codes": self.semantic_codes,
            "semantic_dim": self.semantic_dim,
            "residual_codes": self.residual_codes,
            "residual_coeff_dim": self.residual_coeff_dim,
            "semantic_mode": self.semantic_mode,
            "residual_mode": self.residual_mode,
            "use_semantic": self.use_semantic,
            "use_residual": self.use_residual,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelConfig":
        fields = dict(data)
        fields["stride_schedule"] = tuple(fields["stride_schedule"])
        fields["channel_schedule"] = tuple(fields["channel_schedule"])
        return cls(**fields)


def paper_profile() -> ModelConfig:
    """Full-size configuration: 24 kHz audio, 75 latent frames per second."""
    return ModelConfig(
        profile="paper",
        sample_rate=24000,
        stride_schedule=(2, 4, 5, 8),
        channel_schedule=(32, 64, 128, 256, 512),
        recurrent_hidden=512,
        latent_dim=512,
        decoder_width=384,
        decoder_depth=8,
        attention_heads=4,
        semantic_codes=1000,
        semantic_dim=768,
        residual_codes=1024,
        residual_coeff_dim=512,
    )


def tiny_profile() -> ModelConfig:
    """Desk-scale configuration: 8 kHz audio, 100 latent frames per second."""
    return ModelConfig(
        profile="tiny",
        sample_rate=8000,
        stride_schedule=(2, 4, 10),
        channel_schedule=(16, 32, 48, 64),
        recurrent_hidden=64,
        latent_dim=32,
        decoder_width=64,
        decoder_depth=2,
        attention_heads=2,
        semantic_codes=64,
        semantic_dim=32,
        residual_codes=64,
        residual_coeff_dim=32,
    )


def named_profile(name: str) -> ModelConfig:
    if name == "paper":
        return paper_profile()
    if name == "tiny":
        return tiny_profile()
    raise ValueError(f"unknown profile {name!r}; expected one of {PROFILES}")


def apply_ablations(
    config: ModelConfig,
    no_q1: bool = False,
    no_q2: bool = False,
    q1_random_learnable: bool = False,
    q1_direct_lookup: bool = False,
    q2_learnable: bool = False,
) -> ModelConfig:
    """Translate ablation switches into a concrete model configuration."""
    if no_q1 and (q1_random_learnable or q1_direct_lookup):
        raise ValueError("cannot combine --no-q1 with a semantic mode switch")
    if q1_random_learnable and q1_direct_lookup:
        raise ValueError("cannot combine --q1-random-learnable with --q1-direct-lookup")
    if no_q2 and q2_learnable:
        raise ValueError("cannot combine --no-q2 with --q2-learnable")
    if no_q1:
        config = replace(config, use_semantic=False)
    if no_q2:
        config = replace(config, use_residual=False)
    if q1_random_learnable:
        config = replace(config, semantic_mode="learnable")
    if q1_direct_lookup:
        config = replace(config, semantic_mode="direct")
    if q2_learnable:
        config = replace(config, residual_mode="learnable")
    return config


@dataclass
class ModelOutput:
    """One training-path forward pass: reconstruction plus quantizer state."""

    reconstruction: torch.Tensor
    reference: torch.Tensor
    latents: torch.Tensor
    quantization: QuantizationResult


class SACodec(nn.Module):
    """Encoder, dual quantizer and decoder wired end to end."""

    def __init__(self, config: ModelConfig, semantic_codebook: torch.Tensor | None = None):
        super().__init__()
        self.config = config
        self.encoder = Encoder(config.encoder)
        semantic = None
        if config.use_semantic:
            if config.semantic_mode == "learnable":
                semantic = SemanticAnchor.learnable(config.semantic_codes, config.latent_dim)
            else:
                if semantic_codebook is None:
                    raise ValueError(
                        f"semantic mode {config.semantic_mode!r} needs a frozen codebook"
                    )
                if tuple(semantic_codebook.shape) != (config.semantic_codes, config.semantic_dim):
                    raise ValueError(
                        f"semantic codebook shape {tuple(semantic_codebook.shape)} does not "
                        f"match configured ({config.semantic_codes}, {config.semantic_dim})"
                    )
                semantic = SemanticAnchor(
                    semantic_codebook, config.latent_dim, mode=config.semantic_mode
                )
        residual = None
        if config.use_residual:
            residual = ResidualActivator(
                config.residual_codes,
                config.residual_coeff_dim,
                config.latent_dim,
                mode=config.residual_mode,
            )
        self.quantizer = DualQuantizer(semantic, residual)
        self.decoder = Decoder(config.decoder)

    @property
    def frame_rate(self) -> int:
        return self.config.frame_rate

    @property
    def bits_per_frame(self) -> int:
        return self.quantizer.bits_per_frame

    @property
    def nominal_kbps(self) -> float:
        return self.frame_rate * self.bits_per_frame / 1000.0

    def forward(self, x: torch.Tensor) -> ModelOutput:
        squeeze = x.ndim == 1
        if squeeze:
            x = x.unsqueeze(0)
        h = self.encoder(x)
        result = self.quantizer(h)
        reconstruction = self.decoder(result.decoder_input)
        reference = F.pad(x, (0, reconstruction.shape[-1] - x.shape[-1]))
        if squeeze:
            reconstruction = reconstruction.squeeze(0)
            reference = reference.squeeze(0)
        return ModelOutput(
            reconstruction=reconstruction,
            reference=reference,
            latents=h,
            quantization=result,
        )

    @torch.no_grad()
    def encode_indices(self, waveform: Waveform) -> tuple[torch.Tensor, torch.Tensor]:
        """Eval-mode token streams (semantic, residual) for a waveform."""
        h = self.encoder.encode(waveform)
        result = self.quantizer(h)
        return result.semantic_indices, result.residual_indices

    @torch.no_grad()
    def decode_indices(
        self, semantic_indices: torch.Tensor, residual_indices: torch.Tensor
    ) -> Waveform:
        """Waveform for stored token streams; length is frames * stride."""
        was_training = self.training
        self.eval()
        try:
            fused = self.quantizer.embeddings_from_indices(semantic_indices, residual_indices)
            samples = self.decoder(fused)
        finally:
            self.train(was_training)
        return Waveform(samples, self.config.sample_rate)

    def generator_parameters(self):
        yield from self.parameters()


def model_checksum(model: nn.Module) -> bytes:
    """First 8 bytes of a SHA-256 over all model arrays in name order."""
    digest = hashlib.sha256()
    state = model.state_dict()
    for name in sorted(state):
        tensor = state[name].detach().cpu().contiguous()
        digest.update(name.encode("utf-8"))
        digest.update(str(tuple(tensor.shape)).encode("utf-8"))
        digest.update(tensor.numpy().tobytes())
    return digest.digest()[:8]
