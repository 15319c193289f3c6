"""Training corpora: synthetic vowel-like clips and WAV directories."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .audio import Waveform, read_wav

# Each class is a formant trajectory (start set -> end set, Hz), so clips
# glide like diphthongs instead of sitting on one spectrum; class three is
# deliberately stationary.
_FORMANT_TRACKS = (
    ((730.0, 1090.0, 2440.0), (450.0, 1020.0, 2240.0)),
    ((270.0, 2290.0, 3010.0), (420.0, 1990.0, 2550.0)),
    ((300.0, 870.0, 2240.0), (640.0, 1190.0, 2390.0)),
    ((530.0, 1840.0, 2480.0), (530.0, 1840.0, 2480.0)),
)
_FORMANT_WIDTH = 110.0
_NOISE_LEVEL = 1e-3
_EDGE_FADE_SECONDS = 0.01


@dataclass(frozen=True)
class Clip:
    """A corpus item with its class label."""

    waveform: Waveform
    label: int
    name: str


def synthesize_vowel(
    sample_rate: int,
    seconds: float,
    track: tuple[tuple[float, ...], tuple[float, ...]],
    rng: np.random.Generator,
) -> np.ndarray:
    """One harmonic clip whose spectral envelope glides along ``track``.

    Pitch follows a random contour with vibrato, formants interpolate from
    the start set to the end set, and a slow amplitude modulation keeps the
    envelope moving, so every clip has temporal structure at frame scale.
    """
    num_samples = int(round(seconds * sample_rate))
    t = np.arange(num_samples) / sample_rate
    progress = np.linspace(0.0, 1.0, num_samples)
    f0_start, f0_end = rng.uniform(95.0, 210.0, size=2)
    vibrato = 1.0 + 0.015 * np.sin(2.0 * np.pi * rng.uniform(3.0, 6.5) * t + rng.uniform(0, 6.28))
    f0 = (f0_start + (f0_end - f0_start) * progress) * vibrato
    phase_base = np.cumsum(f0) / sample_rate
    start, end = track
    formants = [
        s + (e - s) * progress for s, e in zip(start, end)
    ]
    nyquist_cap = 0.97 * sample_rate / 2.0
    signal = np.zeros(num_samples)
    max_harmonic = max(1, int(0.95 * (sample_rate / 2.0) / f0.max()))
    for k in range(1, max_harmonic + 1):
        freq = k * f0
        gain = sum(np.exp(-0.5 * ((freq - f) / _FORMANT_WIDTH) ** 2) for f in formants)
        gain += 0.05 / k
        gain = np.where(freq < nyquist_cap, gain, 0.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        signal += gain * np.sin(2.0 * np.pi * k * phase_base + phase)
    tremolo = 1.0 - 0.3 * (0.5 + 0.5 * np.sin(2.0 * np.pi * rng.uniform(1.0, 3.0) * t + rng.uniform(0, 6.28)))
    signal *= tremolo
    signal += _NOISE_LEVEL * rng.standard_normal(num_samples)
    fade = min(num_samples // 2, int(_EDGE_FADE_SECONDS * sample_rate))
    if fade > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
        signal[:fade] *= ramp
        signal[-fade:] *= ramp[::-1]
    peak = np.abs(signal).max()
    return (0.5 * signal / peak).astype(np.float32)


def make_corpus(
    num_clips: int,
    sample_rate: int,
    seconds: float = 1.0,
    seed: int = 0,
    num_classes: int = 4,
) -> list[Clip]:
    """Deterministic corpus of vowel-like clips, labels assigned round-robin."""
    if not 1 <= num_classes <= len(_FORMANT_TRACKS):
        raise ValueError(f"num_classes must be in [1, {len(_FORMANT_TRACKS)}]")
    rng = np.random.default_rng(seed)
    clips = []
    for index in range(num_clips):
        label = index % num_classes
        samples = synthesize_vowel(sample_rate, seconds, _FORMANT_TRACKS[label], rng)
        clips.append(
            Clip(
                waveform=Waveform(torch.from_numpy(samples), sample_rate),
                label=label,
                name=f"vowel{label}_{index:04d}",
            )
        )
    return clips


def sample_crop(clips: list[Clip], crop_samples: int, rng: np.random.Generator) -> torch.Tensor:
    """Uniform clip, uniform offset; clips shorter than the crop are zero-padded."""
    if not clips:
        raise ValueError("empty corpus")
    if crop_samples < 1:
        raise ValueError(f"crop_samples must be positive, got {crop_samples}")
    clip = clips[int(rng.integers(len(clips)))]
    samples = clip.waveform.samples
    length = samples.numel()
    offset = int(rng.integers(max(1, length - crop_samples + 1)))
    piece = samples[offset : offset + crop_samples]
    if piece.numel() < crop_samples:
        piece = torch.nn.functional.pad(piece, (0, crop_samples - piece.numel()))
    return piece


def load_wav_corpus(directory: str | Path) -> list[Clip]:
    """Clips from a directory of WAVs.

    Immediate subdirectories become class labels in sorted-name order;
    loose files at the top level get label 0.
    """
    root = Path(directory)
    if not root.is_dir():
        raise ValueError(f"{root} is not a directory")
    clips = []
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if subdirs:
        groups = [(label, sub, sorted(sub.glob("*.wav"))) for label, sub in enumerate(subdirs)]
    else:
        groups = [(0, root, sorted(root.glob("*.wav")))]
    for label, base, files in groups:
        for path in files:
            clips.append(
                Clip(waveform=read_wav(path), label=label, name=str(path.relative_to(root)))
            )
    if not clips:
        raise ValueError(f"no .wav files under {root}")
    return clips
