"""Adversarial training loop with reproducible sampling and checkpoints."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .codebook import build_semantic_codebook, default_feature_config, load_semantic_codebook
from .corpus import Clip, sample_crop
from .discriminators import DiscriminatorConfig, DiscriminatorEnsemble
from .losses import (
    LossBreakdown,
    LossWeights,
    adversarial_losses,
    feature_matching_loss,
    mel_loss_configs,
    mel_reconstruction_loss,
    total_generator_loss,
)
from .model import ModelConfig, SACodec, apply_ablations, model_checksum, named_profile
from .quantizer import utilization_stats


@dataclass(frozen=True)
class TrainConfig:
    """Flat run configuration; every field round-trips through a text file."""

    profile: str = "tiny"
    steps: int = 200
    batch_size: int = 2
    crop_seconds: float = 1.0
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    weight_decay: float = 1e-2
    seed: int = 0
    corpus_clips: int = 96
    corpus_seconds: float = 1.0
    corpus_seed: int = 1234
    checkpoint_every: int = 0
    period_channels: tuple[int, ...] = (8, 16, 32)
    band_channels: int = 8
    weight_reconstruction: float = 45.0
    weight_adversarial: float = 1.0
    weight_feature_matching: float = 1.0
    weight_commitment_semantic: float = 25.0
    weight_commitment_residual: float = 5.0
    no_q1: bool = False
    no_q2: bool = False
    q1_random_learnable: bool = False
    q1_direct_lookup: bool = False
    q2_learnable: bool = False

    def __post_init__(self) -> None:
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")
        if self.crop_seconds <= 0 or self.learning_rate <= 0:
            raise ValueError("crop_seconds and learning_rate must be positive")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(
            reconstruction=self.weight_reconstruction,
            adversarial=self.weight_adversarial,
            feature_matching=self.weight_feature_matching,
            commitment_semantic=self.weight_commitment_semantic,
            commitment_residual=self.weight_commitment_residual,
        )

    def model_config(self) -> ModelConfig:
        return apply_ablations(
            named_profile(self.profile),
            no_q1=self.no_q1,
            no_q2=self.no_q2,
            q1_random_learnable=self.q1_random_learnable,
            q1_direct_lookup=self.q1_direct_lookup,
            q2_learnable=self.q2_learnable,
        )

    def to_flat_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_flat_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        kwargs = dict(data)
        for f in dataclasses.fields(cls):
            if f.name in kwargs and isinstance(kwargs[f.name], list):
                kwargs[f.name] = tuple(kwargs[f.name])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path, **overrides: Any) -> "TrainConfig":
        """Parse ``key = value`` lines; '#' starts a comment, blanks ignored."""
        defaults = {f.name: f for f in dataclasses.fields(cls)}
        kwargs: dict[str, Any] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in defaults:
                raise ValueError(f"{path}:{lineno}: unknown option {key!r}")
            kwargs[key] = _parse_value(raw, getattr(cls, key), f"{path}:{lineno}")
        kwargs.update(overrides)
        return cls(**kwargs)

    def write(self, path: str | Path) -> None:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ", ".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_value(raw: str, default: Any, where: str) -> Any:
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(part.strip()) for part in raw.split(","))
        return raw
    except ValueError as error:
        raise ValueError(f"{where}: {error}") from None


def cosine_lr(base: float, step: int, total_steps: int) -> float:
    """Cosine decay from ``base`` to zero; a pure function of the step index."""
    progress = min(max(step, 0), total_steps) / total_steps
    return base * 0.5 * (1.0 + math.cos(math.pi * progress))


class Trainer:
    """Owns the model, critics, optimizers and the crop sampler."""

    def __init__(
        self,
        config: TrainConfig,
        clips: list[Clip],
        semantic_codebook: np.ndarray | None = None,
        out_dir: str | Path | None = None,
    ):
        if not clips:
            raise ValueError("empty training corpus")
        self.config = config
        self.clips = clips
        self.out_dir = Path(out_dir) if out_dir is not None else None
        model_config = config.model_config()
        sample_rate = model_config.sample_rate
        for clip in clips:
            if clip.waveform.sample_rate != sample_rate:
                raise ValueError(
                    f"clip {clip.name!r} has rate {clip.waveform.sample_rate}, "
                    f"profile expects {sample_rate}"
                )
        needs_codebook = model_config.use_semantic and model_config.semantic_mode != "learnable"
        if needs_codebook and semantic_codebook is None:
            if config.profile != "tiny":
                raise ValueError(
                    f"profile {config.profile!r} needs an explicit semantic codebook file"
                )
            semantic_codebook = build_semantic_codebook(
                clips,
                model_config.semantic_codes,
                default_feature_config(sample_rate, model_config.semantic_dim),
                seed=config.corpus_seed,
            )
        torch.manual_seed(config.seed)
        codebook_tensor = (
            torch.from_numpy(np.ascontiguousarray(semantic_codebook, dtype=np.float32))
            if semantic_codebook is not None
            else None
        )
        self.model = SACodec(model_config, codebook_tensor)
        self.discriminators = DiscriminatorEnsemble(
            DiscriminatorConfig(
                sample_rate=sample_rate,
                period_channels=config.period_channels,
                band_channels=config.band_channels,
            )
        )
        betas = (config.adam_beta1, config.adam_beta2)
        self.optimizer_g = torch.optim.AdamW(
            self.model.parameters(),
            lr=config.learning_rate,
            betas=betas,
            weight_decay=config.weight_decay,
        )
        self.optimizer_d = torch.optim.AdamW(
            self.discriminators.parameters(),
            lr=config.learning_rate,
            betas=betas,
            weight_decay=config.weight_decay,
        )
        self.crop_rng = np.random.default_rng(config.seed)
        self.step_index = 0
        self.mel_configs = mel_loss_configs(sample_rate)
        self.crop_samples = int(round(config.crop_seconds * sample_rate))

    def sample_batch(self) -> torch.Tensor:
        crops = [
            sample_crop(self.clips, self.crop_samples, self.crop_rng)
            for _ in range(self.config.batch_size)
        ]
        return torch.stack(crops)

    def _set_lr(self) -> float:
        lr = cosine_lr(self.config.learning_rate, self.step_index, self.config.steps)
        for group in self.optimizer_g.param_groups + self.optimizer_d.param_groups:
            group["lr"] = lr
        return lr

    def _check_finite(self, name: str, value: torch.Tensor) -> None:
        if not torch.isfinite(value).all():
            raise RuntimeError(
                f"non-finite {name} loss at step {self.step_index + 1}; aborting run"
            )

    def train_step(self, batch: torch.Tensor) -> dict[str, float]:
        """One discriminator update then one generator update on the batch."""
        lr = self._set_lr()
        self.model.train()
        self.discriminators.train()
        output = self.model(batch)
        fake, real = output.reconstruction, output.reference

        real_scores = self.discriminators(real)
        fake_scores = self.discriminators(fake.detach())
        _, loss_disc = adversarial_losses(real_scores, fake_scores)
        self._check_finite("discriminator", loss_disc)
        self.optimizer_d.zero_grad()
        loss_disc.backward()
        self.optimizer_d.step()

        for parameter in self.discriminators.parameters():
            parameter.requires_grad_(False)
        try:
            with torch.no_grad():
                real_frozen = self.discriminators(real)
            fake_frozen = self.discriminators(fake)
            loss_adv, _ = adversarial_losses(real_frozen, fake_frozen)
            loss_feat = feature_matching_loss(real_frozen, fake_frozen)
            loss_rec = mel_reconstruction_loss(real, fake, self.mel_configs)
            parts = LossBreakdown(
                reconstruction=loss_rec,
                adversarial=loss_adv,
                feature_matching=loss_feat,
                commitment_semantic=output.quantization.commitment_semantic,
                commitment_residual=output.quantization.commitment_residual,
            )
            for name in ("reconstruction", "adversarial", "feature_matching",
                         "commitment_semantic", "commitment_residual"):
                self._check_finite(name, getattr(parts, name))
            loss_total = total_generator_loss(parts, self.config.loss_weights)
            self.optimizer_g.zero_grad()
            loss_total.backward()
            self.optimizer_g.step()
        finally:
            for parameter in self.discriminators.parameters():
                parameter.requires_grad_(True)

        sem_used, sem_pplx = utilization_stats(
            output.quantization.semantic_indices, self.model.quantizer.num_semantic_codes
        )
        res_used, res_pplx = utilization_stats(
            output.quantization.residual_indices, self.model.quantizer.num_residual_codes
        )
        self.step_index += 1
        return {
            "step": self.step_index,
            "learning_rate": lr,
            "loss_disc": float(loss_disc.detach()),
            "loss_total": float(loss_total.detach()),
            "loss_reconstruction": float(loss_rec.detach()),
            "loss_adversarial": float(loss_adv.detach()),
            "loss_feature_matching": float(loss_feat.detach()),
            "loss_commitment_semantic": float(parts.commitment_semantic.detach()),
            "loss_commitment_residual": float(parts.commitment_residual.detach()),
            "semantic_used_fraction": sem_used,
            "semantic_perplexity": sem_pplx,
            "residual_used_fraction": res_used,
            "residual_perplexity": res_pplx,
        }

    def fit(self) -> Path | None:
        """Run to ``config.steps``, appending one JSON line per step to log.jsonl."""
        log_handle = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self.config.write(self.out_dir / "train_config.txt")
            log_handle = open(self.out_dir / "log.jsonl", "a", encoding="utf-8")
        try:
            while self.step_index < self.config.steps:
                record = self.train_step(self.sample_batch())
                if log_handle is not None:
                    log_handle.write(json.dumps(record, sort_keys=True) + "\n")
                    log_handle.flush()
                every = self.config.checkpoint_every
                if (
                    self.out_dir is not None
                    and every > 0
                    and self.step_index % every == 0
                    and self.step_index < self.config.steps
                ):
                    self.save(self.out_dir / f"checkpoint_{self.step_index:06d}.sack")
        finally:
            if log_handle is not None:
                log_handle.close()
        if self.out_dir is not None:
            final = self.out_dir / "checkpoint.sack"
            self.save(final)
            return final
        return None

    def save(self, path: str | Path) -> None:
        arrays: dict[str, np.ndarray] = {}
        for key, tensor in self.model.state_dict().items():
            arrays[f"model.{key}"] = tensor.detach().cpu().numpy()
        for key, tensor in self.discriminators.state_dict().items():
            arrays[f"disc.{key}"] = tensor.detach().cpu().numpy()
        arrays.update(_optimizer_arrays("optg", self.optimizer_g))
        arrays.update(_optimizer_arrays("optd", self.optimizer_d))
        meta = {
            "kind": "trainer",
            "step": self.step_index,
            "model_config": self.model.config.to_dict(),
            "train_config": self.config.to_flat_dict(),
            "crop_rng": _jsonable(self.crop_rng.bit_generator.state),
            "model_checksum": model_checksum(self.model).hex(),
        }
        save_checkpoint(path, arrays, meta)

    @classmethod
    def from_checkpoint(
        cls,
        path: str | Path,
        clips: list[Clip],
        expected: TrainConfig | None = None,
        out_dir: str | Path | None = None,
    ) -> "Trainer":
        """Rebuild a trainer mid-run; continuation matches an uninterrupted run."""
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "trainer":
            raise ValueError(f"{path}: not a trainer checkpoint")
        config = TrainConfig.from_flat_dict(meta["train_config"])
        if expected is not None and expected != config:
            raise ValueError(
                f"{path}: stored train config does not match the requested one; "
                f"refusing cross-configuration resume"
            )
        codebook = arrays.get("model.quantizer.semantic.codebook")
        trainer = cls(config, clips, semantic_codebook=codebook, out_dir=out_dir)
        _load_module_arrays(trainer.model, arrays, "model.")
        _load_module_arrays(trainer.discriminators, arrays, "disc.")
        _load_optimizer_arrays(trainer.optimizer_g, arrays, "optg")
        _load_optimizer_arrays(trainer.optimizer_d, arrays, "optd")
        trainer.crop_rng.bit_generator.state = meta["crop_rng"]
        trainer.step_index = int(meta["step"])
        return trainer


def load_model(path: str | Path) -> tuple[SACodec, dict[str, Any]]:
    """Rebuild just the codec from a checkpoint, for encode/decode/report."""
    arrays, meta = load_checkpoint(path)
    config = ModelConfig.from_dict(meta["model_config"])
    codebook = arrays.get("model.quantizer.semantic.codebook")
    model = SACodec(config, torch.from_numpy(codebook) if codebook is not None else None)
    _load_module_arrays(model, arrays, "model.")
    model.eval()
    return model, meta


def resolve_semantic_codebook(path: str | Path | None) -> np.ndarray | None:
    return None if path is None else load_semantic_codebook(path)


def _optimizer_arrays(prefix: str, optimizer: torch.optim.Optimizer) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    params = [p for group in optimizer.param_groups for p in group["params"]]
    for index, param in enumerate(params):
        state = optimizer.state.get(param)
        if not state:
            continue
        step = state["step"]
        arrays[f"{prefix}.{index}.step"] = np.asarray(
            float(step.item() if isinstance(step, torch.Tensor) else step), dtype=np.float64
        )
        arrays[f"{prefix}.{index}.exp_avg"] = state["exp_avg"].detach().cpu().numpy()
        arrays[f"{prefix}.{index}.exp_avg_sq"] = state["exp_avg_sq"].detach().cpu().numpy()
    return arrays


def _load_optimizer_arrays(
    optimizer: torch.optim.Optimizer, arrays: dict[str, np.ndarray], prefix: str
) -> None:
    params = [p for group in optimizer.param_groups for p in group["params"]]
    for index, param in enumerate(params):
        key = f"{prefix}.{index}.step"
        if key not in arrays:
            continue
        optimizer.state[param] = {
            "step": torch.tensor(float(arrays[key])),
            "exp_avg": torch.from_numpy(arrays[f"{prefix}.{index}.exp_avg"]).clone(),
            "exp_avg_sq": torch.from_numpy(arrays[f"{prefix}.{index}.exp_avg_sq"]).clone(),
        }


def _load_module_arrays(
    module: torch.nn.Module, arrays: dict[str, np.ndarray], prefix: str
) -> None:
    state = {
        key[len(prefix):]: torch.from_numpy(value)
        for key, value in arrays.items()
        if key.startswith(prefix)
    }
    module.load_state_dict(state, strict=True)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value
