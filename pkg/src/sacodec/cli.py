"""Command-line interface: train, encode, decode, report, probe."""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import __version__
from .codec import decode_file, encode_file
from .corpus import load_wav_corpus, make_corpus
from .model import PROFILES
from .reports import (
    evaluation_report,
    render_report_figures,
    render_training_figures,
    semantic_probe,
    write_json,
    write_report_csv,
)
from .trainer import TrainConfig, Trainer, load_model, resolve_semantic_codebook

_EVAL_SEED = 7777


def _fail(error: Exception) -> None:
    raise click.ClickException(str(error))


def _load_clips(corpus_dir: str | None, sample_rate: int, num_clips: int, seed: int):
    if corpus_dir is not None:
        clips = load_wav_corpus(corpus_dir)
        for clip in clips:
            if clip.waveform.sample_rate != sample_rate:
                _fail(
                    ValueError(
                        f"corpus clip {clip.name!r} has rate "
                        f"{clip.waveform.sample_rate}, model expects {sample_rate}"
                    )
                )
        return clips
    return make_corpus(num_clips, sample_rate, seed=seed)


@click.group()
@click.version_option(__version__, prog_name="sacodec")
def main() -> None:
    """Low-bitrate neural speech codec with a semantically anchored dual quantizer."""


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="key = value file")
@click.option("--profile", type=click.Choice(PROFILES), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--steps", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, file_okay=False),
              help="WAV directory; defaults to the synthetic corpus")
@click.option("--codebook", type=click.Path(exists=True, dir_okay=False),
              help="semantic codebook file (raw float32 + .meta descriptor)")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="runs/train")
@click.option("--resume", type=click.Path(exists=True, dir_okay=False),
              help="continue from a trainer checkpoint")
@click.option("--no-q1", is_flag=True, help="disable the semantic stage")
@click.option("--no-q2", is_flag=True, help="disable the residual stage")
@click.option("--q1-random-learnable", is_flag=True,
              help="replace the anchor with a trainable codebook")
@click.option("--q1-direct-lookup", is_flag=True,
              help="use the frozen codebook without the learned projection")
@click.option("--q2-learnable", is_flag=True,
              help="replace the residual stage with a trainable codebook")
@click.option("--figures/--no-figures", default=True, help="render curves after training")
def train(config, profile, seed, steps, batch_size, corpus_dir, codebook, out_dir, resume,
          no_q1, no_q2, q1_random_learnable, q1_direct_lookup, q2_learnable, figures) -> None:
    """Train a codec and write checkpoint, log and config into --out."""
    overrides = {}
    for key, value in (
        ("profile", profile),
        ("seed", seed),
        ("steps", steps),
        ("batch_size", batch_size),
    ):
        if value is not None:
            overrides[key] = value
    for key, value in (
        ("no_q1", no_q1),
        ("no_q2", no_q2),
        ("q1_random_learnable", q1_random_learnable),
        ("q1_direct_lookup", q1_direct_lookup),
        ("q2_learnable", q2_learnable),
    ):
        if value:
            overrides[key] = True
    try:
        train_config = (
            TrainConfig.from_file(config, **overrides)
            if config
            else TrainConfig(**overrides)
        )
        model_config = train_config.model_config()
        clips = _load_clips(
            corpus_dir,
            model_config.sample_rate,
            train_config.corpus_clips,
            train_config.corpus_seed,
        )
        if resume:
            trainer = Trainer.from_checkpoint(resume, clips, out_dir=out_dir)
        else:
            trainer = Trainer(
                train_config,
                clips,
                semantic_codebook=resolve_semantic_codebook(codebook),
                out_dir=out_dir,
            )
        final = trainer.fit()
    except (ValueError, RuntimeError, FileNotFoundError) as error:
        _fail(error)
    click.echo(f"checkpoint: {final}")
    if figures:
        for path in render_training_figures(Path(out_dir) / "log.jsonl", out_dir):
            click.echo(f"figure: {path}")


@main.command()
@click.argument("audio", type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--resample", is_flag=True, help="convert the input to the model's rate")
def encode(audio, checkpoint, out_path, resample) -> None:
    """Compress a WAV file into a .sact token stream."""
    try:
        model, _ = load_model(checkpoint)
        summary = encode_file(model, audio, out_path, allow_resample=resample)
    except (ValueError, RuntimeError, FileNotFoundError) as error:
        _fail(error)
    click.echo(json.dumps(summary, sort_keys=True))


@main.command()
@click.argument("stream", type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--override-checksum", is_flag=True,
              help="decode even if the stream came from a different model")
def decode(stream, checkpoint, out_path, override_checksum) -> None:
    """Reconstruct a WAV file from a .sact token stream."""
    try:
        model, _ = load_model(checkpoint)
        summary = decode_file(model, stream, out_path, override_checksum=override_checksum)
    except (ValueError, RuntimeError, FileNotFoundError) as error:
        _fail(error)
    click.echo(json.dumps(summary, sort_keys=True))


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, file_okay=False),
              help="WAV directory; defaults to a held-out synthetic corpus")
@click.option("--clips", type=int, default=48, help="synthetic corpus size")
@click.option("--seed", type=int, default=_EVAL_SEED)
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="write the JSON report here (with a CSV and figures alongside)")
@click.option("--figures", "figures_dir", type=click.Path(file_okay=False),
              help="directory for figures; defaults next to --out")
def report(checkpoint, corpus_dir, clips, seed, out_path, figures_dir) -> None:
    """Bitrate and utilization report over a corpus, as JSON."""
    try:
        model, _ = load_model(checkpoint)
        corpus = _load_clips(corpus_dir, model.config.sample_rate, clips, seed)
        result = evaluation_report(model, corpus)
    except (ValueError, RuntimeError, FileNotFoundError) as error:
        _fail(error)
    click.echo(json.dumps(result, indent=2, sort_keys=True))
    if out_path:
        write_json(result, out_path)
        csv_path = Path(out_path).with_suffix(".csv")
        write_report_csv(result, csv_path)
        click.echo(f"report: {out_path}", err=True)
        click.echo(f"csv: {csv_path}", err=True)
    target = figures_dir or (Path(out_path).parent if out_path else None)
    if target is not None:
        for path in render_report_figures(result, target):
            click.echo(f"figure: {path}", err=True)


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, file_okay=False),
              help="labeled WAV directory (one subdirectory per class)")
@click.option("--stream", type=click.Choice(["semantic", "residual", "both"]),
              default="semantic")
@click.option("--clips", type=int, default=144, help="synthetic corpus size")
@click.option("--seed", type=int, default=_EVAL_SEED)
@click.option("--out", "out_path", type=click.Path(dir_okay=False))
def probe(checkpoint, corpus_dir, stream, clips, seed, out_path) -> None:
    """Linear label probe on token histograms, as JSON."""
    try:
        model, _ = load_model(checkpoint)
        corpus = _load_clips(corpus_dir, model.config.sample_rate, clips, seed)
        result = semantic_probe(model, corpus, stream=stream, seed=seed)
    except (ValueError, RuntimeError, FileNotFoundError) as error:
        _fail(error)
    click.echo(json.dumps(result, indent=2, sort_keys=True))
    if out_path:
        write_json(result, out_path)


if __name__ == "__main__":
    main()
