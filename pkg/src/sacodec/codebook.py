"""Frozen semantic codebook files and a desk-scale builder for them.

A codebook ships as raw little-endian float32 rows next to a text
descriptor (``<file>.meta``) holding the shape and a SHA-256 of the raw
bytes, so loading can verify integrity without guessing.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .corpus import Clip
from .spectral import SpectralConfig, log_mel

_DESCRIPTOR_SUFFIX = ".meta"


def descriptor_path(path: str | Path) -> Path:
    return Path(str(path) + _DESCRIPTOR_SUFFIX)


def save_semantic_codebook(path: str | Path, codebook: np.ndarray) -> None:
    """Write rows as raw little-endian float32 plus the sidecar descriptor."""
    if codebook.ndim != 2 or codebook.shape[0] < 1 or codebook.shape[1] < 1:
        raise ValueError(f"expected a (rows, dim) array, got shape {codebook.shape}")
    if not np.isfinite(codebook).all():
        raise ValueError("codebook contains non-finite values")
    raw = np.ascontiguousarray(codebook, dtype="<f4").tobytes()
    Path(path).write_bytes(raw)
    lines = [
        f"rows = {codebook.shape[0]}",
        f"dim = {codebook.shape[1]}",
        "dtype = float32",
        "byte_order = little",
        f"sha256 = {hashlib.sha256(raw).hexdigest()}",
    ]
    descriptor_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_semantic_codebook(path: str | Path) -> np.ndarray:
    """Read and verify a codebook written by :func:`save_semantic_codebook`."""
    raw_path = Path(path)
    meta_path = descriptor_path(path)
    if not raw_path.exists():
        raise FileNotFoundError(f"codebook file {raw_path} not found")
    if not meta_path.exists():
        raise FileNotFoundError(f"codebook descriptor {meta_path} not found")
    fields: dict[str, str] = {}
    for lineno, line in enumerate(meta_path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{meta_path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    missing = {"rows", "dim", "dtype", "byte_order", "sha256"} - fields.keys()
    if missing:
        raise ValueError(f"{meta_path}: missing fields {sorted(missing)}")
    if fields["dtype"] != "float32" or fields["byte_order"] != "little":
        raise ValueError(
            f"{meta_path}: unsupported encoding {fields['dtype']}/{fields['byte_order']}"
        )
    rows, dim = int(fields["rows"]), int(fields["dim"])
    raw = raw_path.read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != fields["sha256"]:
        raise ValueError(f"{raw_path}: SHA-256 mismatch; file is corrupt or was swapped")
    expected = rows * dim * 4
    if len(raw) != expected:
        raise ValueError(f"{raw_path}: expected {expected} bytes for {rows}x{dim}, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").reshape(rows, dim).copy()


def kmeans(data: np.ndarray, num_clusters: int, seed: int = 0, iterations: int = 50) -> np.ndarray:
    """Plain Lloyd iterations with farthest-point reseeding of empty clusters.

    Deterministic for a given seed; single-threaded numpy only, so results
    are stable across machines.
    """
    if data.ndim != 2 or data.shape[0] < num_clusters:
        raise ValueError(f"need at least {num_clusters} rows, got shape {data.shape}")
    rng = np.random.default_rng(seed)
    points = np.asarray(data, dtype=np.float64)
    centroids = points[rng.choice(points.shape[0], size=num_clusters, replace=False)].copy()
    for _ in range(iterations):
        dist = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = dist.argmin(axis=1)
        for cluster in range(num_clusters):
            mask = assign == cluster
            if mask.any():
                centroids[cluster] = points[mask].mean(axis=0)
            else:
                farthest = dist.min(axis=1).argmax()
                centroids[cluster] = points[farthest]
    return centroids


def build_semantic_codebook(
    clips: list[Clip],
    num_codes: int,
    mel_config: SpectralConfig,
    seed: int = 0,
) -> np.ndarray:
    """Cluster log-mel frames of a corpus into a stand-in semantic codebook.

    Frames are standardized per dimension before clustering so the rows are
    insensitive to corpus loudness, but they stay in feature space: like
    any externally learned codebook, their scale and geometry do not match
    the encoder's latents, and bridging that gap is the projection's job.
    The returned float32 rows are guaranteed distinct; exact duplicates
    (possible only on degenerate corpora) are nudged deterministically.
    """
    frames = [log_mel(clip.waveform, mel_config).numpy() for clip in clips]
    stacked = np.concatenate(frames, axis=0)
    stacked = (stacked - stacked.mean(axis=0)) / np.maximum(stacked.std(axis=0), 1e-6)
    centroids = kmeans(stacked, num_codes, seed=seed).astype(np.float32)
    unique, first = np.unique(centroids, axis=0, return_index=True)
    while unique.shape[0] < centroids.shape[0]:
        duplicates = np.setdiff1d(np.arange(centroids.shape[0]), first)
        centroids[duplicates, 0] += 1e-4 * (1 + duplicates).astype(np.float32)
        unique, first = np.unique(centroids, axis=0, return_index=True)
    return centroids


def default_feature_config(sample_rate: int, mel_bins: int) -> SpectralConfig:
    """Analysis scale used to featurize clips for the stand-in codebook."""
    return SpectralConfig(fft_size=256, hop=64, mel_bins=mel_bins, sample_rate=sample_rate)
