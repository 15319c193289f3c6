"""Training objectives: multi-scale mel reconstruction, LSGAN terms, feature matching."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .discriminators import DiscriminatorOutput
from .spectral import SpectralConfig, log_mel_tensor

_MEL_WINDOWS = (64, 128, 256, 512, 1024, 2048)


@dataclass(frozen=True)
class LossWeights:
    """Weights of the five generator loss terms."""

    reconstruction: float = 45.0
    adversarial: float = 1.0
    feature_matching: float = 1.0
    commitment_semantic: float = 25.0
    commitment_residual: float = 5.0

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")


@dataclass
class LossBreakdown:
    """Unweighted generator loss terms; fields may be tensors or floats."""

    reconstruction: torch.Tensor | float
    adversarial: torch.Tensor | float
    feature_matching: torch.Tensor | float
    commitment_semantic: torch.Tensor | float
    commitment_residual: torch.Tensor | float


def total_generator_loss(parts: LossBreakdown, weights: LossWeights):
    """Weighted sum of the five generator terms."""
    return (
        weights.reconstruction * parts.reconstruction
        + weights.adversarial * parts.adversarial
        + weights.feature_matching * parts.feature_matching
        + weights.commitment_semantic * parts.commitment_semantic
        + weights.commitment_residual * parts.commitment_residual
    )


def mel_loss_configs(sample_rate: int) -> tuple[SpectralConfig, ...]:
    """Analysis scales for the reconstruction loss.

    Windows from 64 to 2048 with quarter-window hops; mel bin counts grow
    with the window but stay within [5, 80].
    """
    return tuple(
        SpectralConfig(
            fft_size=w,
            hop=w // 4,
            mel_bins=min(80, max(5, w // 8)),
            sample_rate=sample_rate,
        )
        for w in _MEL_WINDOWS
    )


def mel_reconstruction_loss(
    reference: torch.Tensor,
    estimate: torch.Tensor,
    configs: tuple[SpectralConfig, ...],
) -> torch.Tensor:
    """Mean absolute log-mel difference summed over analysis scales."""
    if reference.shape != estimate.shape:
        raise ValueError(
            f"length mismatch: {tuple(reference.shape)} vs {tuple(estimate.shape)}; "
            "trim or pad before calling"
        )
    total = None
    for config in configs:
        diff = (log_mel_tensor(reference, config) - log_mel_tensor(estimate, config)).abs().mean()
        total = diff if total is None else total + diff
    return total


def adversarial_losses(
    real: DiscriminatorOutput, fake: DiscriminatorOutput
) -> tuple[torch.Tensor, torch.Tensor]:
    """Least-squares GAN objectives as (generator, discriminator) scalars.

    The discriminator pushes real logits to 1 and fake logits to 0; the
    generator pushes fake logits to 1. Sums over sub-discriminators.
    """
    if real.num_discriminators != fake.num_discriminators:
        raise ValueError("real and fake outputs cover different ensembles")
    gen = None
    disc = None
    for real_logits, fake_logits in zip(real.logits, fake.logits):
        g = (fake_logits - 1.0).square().mean()
        d = (real_logits - 1.0).square().mean() + fake_logits.square().mean()
        gen = g if gen is None else gen + g
        disc = d if disc is None else disc + d
    return gen, disc


def feature_matching_loss(real: DiscriminatorOutput, fake: DiscriminatorOutput) -> torch.Tensor:
    """Mean absolute feature difference, averaged over layers and critics."""
    if real.num_discriminators != fake.num_discriminators:
        raise ValueError("real and fake outputs cover different ensembles")
    per_disc = []
    for real_feats, fake_feats in zip(real.features, fake.features):
        if len(real_feats) != len(fake_feats):
            raise ValueError("feature layer counts differ between real and fake")
        layer_means = []
        for rf, ff in zip(real_feats, fake_feats):
            if rf.shape != ff.shape:
                raise ValueError(f"feature shape mismatch: {tuple(rf.shape)} vs {tuple(ff.shape)}")
            layer_means.append((rf - ff).abs().mean())
        per_disc.append(torch.stack(layer_means).mean())
    return torch.stack(per_disc).mean()
