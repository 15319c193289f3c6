"""Evaluation reports: bitrate, codebook utilization, a label probe, figures."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import torch
from sklearn.linear_model import LogisticRegression

from .bitstream import stream_bits
from .codec import encode_waveform
from .corpus import Clip
from .losses import mel_loss_configs, mel_reconstruction_loss
from .model import SACodec, model_checksum
from .quantizer import utilization_stats


def _entropy_bits(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    probs = counts[counts > 0] / total
    return float(-(probs * np.log2(probs)).sum())


def _stream_stats(indices: np.ndarray, num_codes: int, frame_rate: int) -> dict[str, Any]:
    used, perplexity = utilization_stats(indices, num_codes)
    counts = np.bincount(indices.astype(np.int64), minlength=num_codes)
    bits = stream_bits(num_codes)
    return {
        "num_codes": num_codes,
        "bits_per_frame": bits,
        "nominal_kbps": frame_rate * bits / 1000.0,
        "empirical_kbps": frame_rate * _entropy_bits(counts) / 1000.0,
        "used_fraction": used,
        "perplexity": perplexity,
        "histogram": counts.tolist(),
    }


def evaluation_report(model: SACodec, clips: list[Clip]) -> dict[str, Any]:
    """Tokenize a corpus and summarize bitrate, utilization and mel distance."""
    if not clips:
        raise ValueError("empty evaluation corpus")
    semantic_all, residual_all = [], []
    mel_total = 0.0
    configs = mel_loss_configs(model.config.sample_rate)
    for clip in clips:
        sequence = encode_waveform(model, clip.waveform)
        semantic_all.append(sequence.semantic_indices)
        residual_all.append(sequence.residual_indices)
        decoded = model.decode_indices(
            torch.from_numpy(sequence.semantic_indices),
            torch.from_numpy(sequence.residual_indices),
        )
        reference = torch.nn.functional.pad(
            clip.waveform.samples, (0, len(decoded) - len(clip.waveform))
        )
        mel_total += float(mel_reconstruction_loss(reference, decoded.samples, configs))
    semantic = np.concatenate(semantic_all)
    residual = np.concatenate(residual_all)
    frame_rate = model.frame_rate
    report = {
        "model": {
            "profile": model.config.profile,
            "sample_rate": model.config.sample_rate,
            "frame_rate": frame_rate,
            "bits_per_frame": model.bits_per_frame,
            "nominal_kbps": model.nominal_kbps,
            "checksum": model_checksum(model).hex(),
        },
        "corpus": {"num_clips": len(clips), "num_frames": int(semantic.shape[0])},
        "mel_distance": mel_total / len(clips),
        "semantic": _stream_stats(semantic, model.quantizer.num_semantic_codes, frame_rate),
        "residual": _stream_stats(residual, model.quantizer.num_residual_codes, frame_rate),
    }
    return report


def _probe_features(model: SACodec, clips: list[Clip], stream: str) -> np.ndarray:
    rows = []
    for clip in clips:
        sequence = encode_waveform(model, clip.waveform)
        parts = []
        if stream in ("semantic", "both"):
            counts = np.bincount(
                sequence.semantic_indices, minlength=model.quantizer.num_semantic_codes
            )
            parts.append(counts / sequence.num_frames)
        if stream in ("residual", "both"):
            counts = np.bincount(
                sequence.residual_indices, minlength=model.quantizer.num_residual_codes
            )
            parts.append(counts / sequence.num_frames)
        rows.append(np.concatenate(parts))
    return np.stack(rows)


def _stratified_split(
    labels: np.ndarray, train_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    train_idx, test_idx = [], []
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        members = members[rng.permutation(members.size)]
        cut = max(1, int(round(train_fraction * members.size)))
        cut = min(cut, members.size - 1)
        train_idx.extend(members[:cut])
        test_idx.extend(members[cut:])
    return np.sort(np.asarray(train_idx)), np.sort(np.asarray(test_idx))


def semantic_probe(
    model: SACodec,
    clips: list[Clip],
    stream: str = "semantic",
    seed: int = 0,
    train_fraction: float = 2.0 / 3.0,
) -> dict[str, Any]:
    """Linear classification of clip labels from per-clip token histograms.

    Reports accuracy against chance plus a three-sigma binomial threshold
    and a shuffled-label null run, so a pass is attributable to the tokens
    rather than to classifier capacity.
    """
    if stream not in ("semantic", "residual", "both"):
        raise ValueError(f"unknown stream {stream!r}")
    labels = np.asarray([clip.label for clip in clips])
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("probe needs at least two classes")
    if any(np.sum(labels == c) < 2 for c in classes):
        raise ValueError("probe needs at least two clips per class")
    features = _probe_features(model, clips, stream)
    rng = np.random.default_rng(seed)
    train_idx, test_idx = _stratified_split(labels, train_fraction, rng)

    def fit_accuracy(train_labels: np.ndarray) -> float:
        classifier = LogisticRegression(max_iter=2000)
        classifier.fit(features[train_idx], train_labels)
        return float(
            (classifier.predict(features[test_idx]) == labels[test_idx]).mean()
        )

    accuracy = fit_accuracy(labels[train_idx])
    shuffled = labels[train_idx].copy()
    rng.shuffle(shuffled)
    null_accuracy = fit_accuracy(shuffled)
    chance = 1.0 / classes.size
    threshold = chance + 3.0 * math.sqrt(chance * (1.0 - chance) / test_idx.size)
    return {
        "stream": stream,
        "num_classes": int(classes.size),
        "num_train": int(train_idx.size),
        "num_test": int(test_idx.size),
        "accuracy": accuracy,
        "chance": chance,
        "threshold_3sigma": threshold,
        "above_chance": accuracy > threshold,
        "null_accuracy": null_accuracy,
    }


def write_json(report: dict[str, Any], path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _flatten(prefix: str, value: Any, rows: list[tuple[str, Any]]) -> None:
    if isinstance(value, dict):
        for key in sorted(value):
            _flatten(f"{prefix}.{key}" if prefix else key, value[key], rows)
    elif isinstance(value, list):
        rows.append((prefix, " ".join(str(v) for v in value)))
    else:
        rows.append((prefix, value))


def write_report_csv(report: dict[str, Any], path: str | Path) -> None:
    """Flattened key,value rows; histograms become space-separated counts."""
    rows: list[tuple[str, Any]] = []
    _flatten("", report, rows)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["key", "value"])
        writer.writerows(rows)


def render_report_figures(report: dict[str, Any], out_dir: str | Path) -> list[Path]:
    """Utilization and bitrate charts for an evaluation report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for axis, stream in zip(axes, ("semantic", "residual")):
        histogram = np.asarray(report[stream]["histogram"])
        axis.bar(np.arange(histogram.size), histogram, width=1.0)
        axis.set_title(
            f"{stream}: {report[stream]['used_fraction']:.2f} used, "
            f"perplexity {report[stream]['perplexity']:.1f}"
        )
        axis.set_xlabel("code index")
        axis.set_ylabel("count")
    fig.tight_layout()
    path = out / "token_histograms.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, axis = plt.subplots(figsize=(6, 4))
    streams = ("semantic", "residual")
    nominal = [report[s]["nominal_kbps"] for s in streams]
    empirical = [report[s]["empirical_kbps"] for s in streams]
    positions = np.arange(len(streams))
    axis.bar(positions - 0.2, nominal, width=0.4, label="nominal")
    axis.bar(positions + 0.2, empirical, width=0.4, label="empirical")
    axis.set_xticks(positions, streams)
    axis.set_ylabel("kbit/s")
    axis.set_title(f"total nominal {report['model']['nominal_kbps']:.3f} kbit/s")
    axis.legend()
    fig.tight_layout()
    path = out / "bitrate.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def render_training_figures(log_path: str | Path, out_dir: str | Path) -> list[Path]:
    """Loss and utilization curves from a training log.jsonl."""
    records = [
        json.loads(line)
        for line in Path(log_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if not records:
        raise ValueError(f"{log_path} holds no records")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    steps = [r["step"] for r in records]
    written = []

    fig, axis = plt.subplots(figsize=(8, 4.5))
    for key, label in (
        ("loss_reconstruction", "mel reconstruction"),
        ("loss_disc", "discriminator"),
        ("loss_adversarial", "adversarial (gen)"),
        ("loss_feature_matching", "feature matching"),
    ):
        axis.plot(steps, [r[key] for r in records], label=label)
    axis.set_xlabel("step")
    axis.set_ylabel("loss")
    axis.set_yscale("log")
    axis.legend()
    fig.tight_layout()
    path = out / "training_losses.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, axis = plt.subplots(figsize=(8, 4.5))
    axis.plot(steps, [r["semantic_used_fraction"] for r in records], label="semantic used")
    axis.plot(steps, [r["residual_used_fraction"] for r in records], label="residual used")
    axis.set_xlabel("step")
    axis.set_ylabel("fraction of codebook per batch")
    axis.set_ylim(0.0, 1.05)
    axis.legend()
    fig.tight_layout()
    path = out / "training_utilization.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
