"""Extraction command line."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .augment import AugmentConfig
from .extractors import ExtractorUnavailable, build_extractors
from .pipeline import Extractor, merge_shards, read_manifest, run_extraction, write_store
from .specs import DEFAULT_SPECS


@click.group()
def main():
    """Turn media files into embedding-store directories."""


@main.command("extract")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--video-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--audio-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--profile", type=click.Choice(["lite", "full"]), default="lite",
              show_default=True,
              help="lite: deterministic projection features; full: pre-trained backends.")
@click.option("--segments", type=int, default=10, show_default=True)
@click.option("--augment-train", is_flag=True,
              help="Add one augmented duplicate per train-split video.")
@click.option("--augment-seed", type=int, default=0, show_default=True)
@click.option("--flip-prob", type=float, default=0.5, show_default=True)
@click.option("--brightness", type=float, default=0.2, show_default=True)
@click.option("--contrast", type=float, default=0.2, show_default=True)
@click.option("--rotation-deg", type=float, default=10.0, show_default=True)
@click.option("--places-weights", type=click.Path(exists=True), default=None,
              help="resnet50 places365 checkpoint (full profile).")
@click.option("--iov-weights", type=click.Path(exists=True), default=None,
              help="torchscript CNN420 export (full profile).")
def cmd_extract(manifest_path, video_dir, audio_dir, out_dir, profile, segments,
                augment_train, augment_seed, flip_prob, brightness, contrast,
                rotation_deg, places_weights, iov_weights):
    """Extract every manifest video into a store directory."""
    entries = read_manifest(manifest_path)
    try:
        extractors = build_extractors(
            DEFAULT_SPECS, profile=profile,
            places_weights=places_weights, iov_weights=iov_weights,
        )
    except ExtractorUnavailable as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    extractor = Extractor(
        DEFAULT_SPECS, extractors, segments_per_video=segments,
        augment=AugmentConfig(flip_prob, brightness, contrast, rotation_deg),
    )
    result = run_extraction(
        entries, extractor, Path(video_dir), Path(audio_dir),
        augment_train=augment_train, augment_seed=augment_seed,
    )
    write_store(result, out_dir)
    click.echo(json.dumps({
        "out": str(out_dir),
        "records": len(result.records),
        "errors": [{"video_id": e.video_id, "reason": e.reason}
                   for e in result.errors],
    }))
    if result.errors:
        click.echo(f"{len(result.errors)} file(s) failed; see errors.jsonl", err=True)


@main.command("merge")
@click.argument("shards", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
def cmd_merge(shards, out_dir):
    """Merge shard stores produced by parallel extract runs."""
    try:
        merge_shards(list(shards), out_dir)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(json.dumps({"out": str(out_dir), "shards": len(shards)}))


if __name__ == "__main__":
    main()
