"""Dual quantizer: a frozen semantic anchor plus a reparameterized residual stage.

The semantic stage snaps each latent onto a frozen external codebook seen
through a learnable linear map, so only the map trains. The residual stage
quantizes what the semantic stage missed against a frozen random coefficient
matrix times a learnable basis; updating the basis moves every effective
codeword at once, which keeps the whole codebook active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .bitstream import stream_bits

_COMMITMENT_BETA = 0.25
_CHUNK_ELEMENTS = 1 << 24


def nearest_codeword(query: torch.Tensor, codebook: torch.Tensor) -> int:
    """Index of the codebook row closest to ``query`` in squared distance.

    Ties resolve to the lowest index.
    """
    if query.ndim != 1 or codebook.ndim != 2 or codebook.shape[1] != query.shape[0]:
        raise ValueError(
            f"expected (dim,) query and (codes, dim) codebook, got "
            f"{tuple(query.shape)} and {tuple(codebook.shape)}"
        )
    if codebook.shape[0] < 1:
        raise ValueError("codebook is empty")
    if not torch.isfinite(query).all() or not torch.isfinite(codebook).all():
        raise ValueError("non-finite values in query or codebook")
    return int(nearest_indices(query.unsqueeze(0), codebook).item())


def nearest_indices(x: torch.Tensor, codebook: torch.Tensor) -> torch.Tensor:
    """Nearest-row indices for a batch of queries (..., dim) -> (...).

    Distances are plain elementwise squared differences summed over the
    feature axis, chunked over queries to bound memory; argmin picks the
    first minimum, so ties go to the lowest index.
    """
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    num_codes = codebook.shape[0]
    chunk = max(1, _CHUNK_ELEMENTS // (num_codes * codebook.shape[1]))
    pieces = []
    with torch.no_grad():
        for start in range(0, flat.shape[0], chunk):
            block = flat[start : start + chunk]
            dist = (block.unsqueeze(1) - codebook.unsqueeze(0)).square().sum(dim=-1)
            pieces.append(torch.argmin(dist, dim=1))
    return torch.cat(pieces).reshape(lead)


class SemanticAnchor(nn.Module):
    """Quantizer stage built on a frozen external codebook.

    Modes:
      * ``projected``: codewords are a learnable linear map of the frozen
        rows; only the map trains.
      * ``direct``: the frozen rows are used as-is (requires matching dims).
      * ``learnable``: a standard trainable codebook of the same size,
        ignoring the frozen rows.
    """

    def __init__(
        self,
        codebook: torch.Tensor | None,
        latent_dim: int,
        mode: str = "projected",
        num_codes: int | None = None,
    ):
        super().__init__()
        if mode not in ("projected", "direct", "learnable"):
            raise ValueError(f"unknown semantic mode {mode!r}")
        self.mode = mode
        self.latent_dim = latent_dim
        if mode == "learnable":
            if num_codes is None:
                num_codes = codebook.shape[0] if codebook is not None else None
            if num_codes is None or num_codes < 1:
                raise ValueError("learnable mode needs a positive num_codes")
            self._num_codes = num_codes
            init = torch.randn(num_codes, latent_dim) * latent_dim**-0.5
            self.embeddings = nn.Parameter(init)
            return
        if codebook is None or codebook.ndim != 2 or codebook.shape[0] < 1:
            raise ValueError("projected/direct modes need a (codes, dim) codebook")
        if not torch.isfinite(codebook).all():
            raise ValueError("semantic codebook contains non-finite values")
        if torch.unique(codebook, dim=0).shape[0] != codebook.shape[0]:
            raise ValueError("semantic codebook contains duplicate rows")
        if mode == "direct" and codebook.shape[1] != latent_dim:
            raise ValueError(
                f"direct lookup needs codebook dim {codebook.shape[1]} == latent dim {latent_dim}"
            )
        self.register_buffer("codebook", codebook.detach().clone().float())
        self._num_codes = codebook.shape[0]
        if mode == "projected":
            self.projector = nn.Linear(codebook.shape[1], latent_dim)
            with torch.no_grad():
                if codebook.shape[1] == latent_dim:
                    self.projector.weight.copy_(torch.eye(latent_dim))
                else:
                    nn.init.orthogonal_(self.projector.weight)
                self.projector.bias.zero_()

    @classmethod
    def learnable(cls, num_codes: int, latent_dim: int) -> "SemanticAnchor":
        """Standard trainable codebook of the same size, no frozen rows."""
        return cls(None, latent_dim, mode="learnable", num_codes=num_codes)

    @property
    def num_codes(self) -> int:
        return self._num_codes

    def effective_codebook(self) -> torch.Tensor:
        if self.mode == "projected":
            if not torch.isfinite(self.projector.weight).all() or not torch.isfinite(self.projector.bias).all():
                raise ValueError("semantic projector has non-finite parameters")
            return self.projector(self.codebook)
        if self.mode == "direct":
            return self.codebook
        return self.embeddings


class ResidualActivator(nn.Module):
    """Residual quantizer whose codebook is frozen coefficients times a basis.

    In ``simvq`` mode only the basis trains, so one optimizer step shifts
    every effective codeword. ``learnable`` mode is a standard trainable
    codebook of the same size, used as a collapse-prone control.
    """

    def __init__(self, num_codes: int, coeff_dim: int, latent_dim: int, mode: str = "simvq"):
        super().__init__()
        if num_codes < 1 or coeff_dim < 1 or latent_dim < 1:
            raise ValueError("num_codes, coeff_dim and latent_dim must be positive")
        if mode not in ("simvq", "learnable"):
            raise ValueError(f"unknown residual mode {mode!r}")
        self.mode = mode
        self.latent_dim = latent_dim
        if mode == "simvq":
            coeffs = torch.randn(num_codes, coeff_dim) * coeff_dim**-0.5
            self.register_buffer("coefficients", coeffs)
            if coeff_dim == latent_dim:
                basis = torch.eye(latent_dim)
            else:
                basis = torch.empty(coeff_dim, latent_dim)
                nn.init.orthogonal_(basis)
            self.basis = nn.Parameter(basis)
        else:
            init = torch.randn(num_codes, latent_dim) * latent_dim**-0.5
            self.embeddings = nn.Parameter(init)
            self._num_codes = num_codes

    @property
    def num_codes(self) -> int:
        if self.mode == "simvq":
            return self.coefficients.shape[0]
        return self._num_codes

    def effective_codebook(self) -> torch.Tensor:
        if self.mode == "simvq":
            if not torch.isfinite(self.basis).all():
                raise ValueError("residual basis has non-finite parameters")
            return self.coefficients @ self.basis
        return self.embeddings


def fuse_and_passthrough(h: torch.Tensor, e1: torch.Tensor, e2: torch.Tensor) -> torch.Tensor:
    """Sum the two codes and pass encoder gradients straight through.

    The forward value is bit-identical to ``e1 + e2``; the backward pass
    treats the result as ``h``.
    """
    fused = e1 + e2
    return fused.detach() + (h - h.detach())


def quantization_losses(
    h: torch.Tensor, e1: torch.Tensor, r: torch.Tensor, e2: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Two-sided commitment losses for the semantic and residual stages.

    Each is mse(sg(input), code) + 0.25 * mse(input, sg(code)); the first
    term trains the codeword parameters, the second holds the encoder near
    its assignments.
    """
    sem = F.mse_loss(h.detach(), e1) + _COMMITMENT_BETA * F.mse_loss(h, e1.detach())
    res = F.mse_loss(r.detach(), e2) + _COMMITMENT_BETA * F.mse_loss(r, e2.detach())
    return sem, res


def utilization_stats(indices, num_codes: int) -> tuple[float, float]:
    """Fraction of distinct codes used and the perplexity of their histogram.

    Perplexity is exp of the Shannon entropy (natural log) of the empirical
    index distribution: 1.0 for a constant stream, ``num_codes`` when all
    codes appear equally often.
    """
    if isinstance(indices, torch.Tensor):
        flat = indices.detach().cpu().numpy().reshape(-1)
    else:
        flat = np.asarray(indices).reshape(-1)
    if flat.size == 0:
        raise ValueError("empty index sequence")
    if num_codes < 1:
        raise ValueError(f"num_codes must be positive, got {num_codes}")
    flat = flat.astype(np.int64)
    if flat.min() < 0 or flat.max() >= num_codes:
        raise ValueError(f"indices out of range [0, {num_codes})")
    counts = np.bincount(flat, minlength=num_codes)
    used_fraction = float((counts > 0).sum() / num_codes)
    probs = counts[counts > 0] / flat.size
    perplexity = float(np.exp(-(probs * np.log(probs)).sum()))
    return used_fraction, perplexity


@dataclass
class QuantizationResult:
    """Per-call outputs of the dual quantizer for a latent batch."""

    semantic_indices: torch.Tensor
    residual_indices: torch.Tensor
    semantic_embedding: torch.Tensor
    residual_embedding: torch.Tensor
    fused: torch.Tensor
    decoder_input: torch.Tensor
    commitment_semantic: torch.Tensor
    commitment_residual: torch.Tensor


class DualQuantizer(nn.Module):
    """Semantic anchor followed by a residual stage, with ablation switches.

    A disabled stage contributes a zero embedding and a single-code stream
    (index 0 everywhere), so downstream token plumbing never branches.
    """

    def __init__(
        self,
        semantic: SemanticAnchor | None,
        residual: ResidualActivator | None,
    ):
        super().__init__()
        if semantic is None and residual is None:
            raise ValueError("at least one quantizer stage must be enabled")
        self.semantic = semantic
        self.residual = residual

    @property
    def num_semantic_codes(self) -> int:
        return self.semantic.num_codes if self.semantic is not None else 1

    @property
    def num_residual_codes(self) -> int:
        return self.residual.num_codes if self.residual is not None else 1

    @property
    def bits_per_frame(self) -> int:
        return stream_bits(self.num_semantic_codes) + stream_bits(self.num_residual_codes)

    def forward(self, h: torch.Tensor) -> QuantizationResult:
        if h.shape[-1] < 1:
            raise ValueError("empty latent")
        zero_idx = torch.zeros(h.shape[:-1], dtype=torch.long, device=h.device)
        zero_scalar = torch.zeros((), dtype=h.dtype, device=h.device)
        if self.semantic is not None:
            book1 = self.semantic.effective_codebook().to(h.dtype)
            sem_idx = nearest_indices(h, book1)
            e1 = book1[sem_idx]
        else:
            sem_idx, e1 = zero_idx, torch.zeros_like(h)
        r = h - e1
        if self.residual is not None:
            book2 = self.residual.effective_codebook().to(h.dtype)
            res_idx = nearest_indices(r, book2)
            e2 = book2[res_idx]
        else:
            res_idx, e2 = zero_idx, torch.zeros_like(h)
        sem_loss, res_loss = quantization_losses(h, e1, r, e2)
        if self.semantic is None:
            sem_loss = zero_scalar
        if self.residual is None:
            res_loss = zero_scalar
        return QuantizationResult(
            semantic_indices=sem_idx,
            residual_indices=res_idx,
            semantic_embedding=e1,
            residual_embedding=e2,
            fused=e1 + e2,
            decoder_input=fuse_and_passthrough(h, e1, e2),
            commitment_semantic=sem_loss,
            commitment_residual=res_loss,
        )

    def embeddings_from_indices(
        self, semantic_indices: torch.Tensor, residual_indices: torch.Tensor
    ) -> torch.Tensor:
        """Fused embedding for stored token streams (the decode path)."""
        if semantic_indices.shape != residual_indices.shape:
            raise ValueError("semantic and residual index shapes differ")
        with torch.no_grad():
            if self.semantic is not None:
                _check_range(semantic_indices, self.num_semantic_codes, "semantic")
                e1 = self.semantic.effective_codebook()[semantic_indices]
            else:
                e1 = None
            if self.residual is not None:
                _check_range(residual_indices, self.num_residual_codes, "residual")
                e2 = self.residual.effective_codebook()[residual_indices]
            else:
                e2 = None
        if e1 is None:
            return e2
        if e2 is None:
            return e1
        return e1 + e2


def _check_range(indices: torch.Tensor, num_codes: int, name: str) -> None:
    if indices.numel() == 0:
        raise ValueError(f"empty {name} index stream")
    if int(indices.min()) < 0 or int(indices.max()) >= num_codes:
        raise ValueError(f"{name} indices out of range [0, {num_codes})")
