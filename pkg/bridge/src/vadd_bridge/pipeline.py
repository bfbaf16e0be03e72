"""Manifest-driven extraction producing embedding-store directories.

The output follows the store contract exactly: index.json declaring
sources (in spec order) and videos (with row offsets counted in rows),
and data.bin holding little-endian float32 rows, one per (video, second),
sources concatenated in index order. Undecodable inputs become error
records and the batch continues.

Workers may extract disjoint manifest slices into private shard
directories; merge_shards concatenates them into one store in manifest
order with a single writer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment_frames
from .extractors import AudioExtractor, VisualExtractor
from .media import MediaError, audio_windows, find_audio, find_video, middle_frames
from .specs import AUDIO, VISUAL, ExtractorSpec

INDEX_FILE = "index.json"
DATA_FILE = "data.bin"


@dataclass
class ManifestEntry:
    video_id: str
    scene: str
    duration_s: float
    split: str


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            entries.append(
                ManifestEntry(
                    video_id=obj["video_id"],
                    scene=obj["class"],
                    duration_s=float(obj.get("duration_s", 10)),
                    split=obj["split"],
                )
            )
    return entries


@dataclass
class ExtractedRecord:
    video_id: str
    scene: str
    augmented: bool
    segments: np.ndarray  # [seconds x total width] float32


@dataclass
class ExtractionErrorRecord:
    video_id: str
    reason: str


@dataclass
class ExtractionResult:
    sources: list[dict]
    segments_per_video: int
    records: list[ExtractedRecord] = field(default_factory=list)
    errors: list[ExtractionErrorRecord] = field(default_factory=list)


class Extractor:
    """Applies the configured sources to one video's frames and audio."""

    def __init__(
        self,
        specs: tuple[ExtractorSpec, ...],
        extractors: dict[str, VisualExtractor | AudioExtractor],
        segments_per_video: int = 10,
        augment: AugmentConfig | None = None,
    ):
        self.specs = specs
        self.extractors = extractors
        self.segments_per_video = segments_per_video
        self.augment = augment or AugmentConfig()

    def source_table(self) -> list[dict]:
        table = []
        for spec in self.specs:
            extractor = self.extractors[spec.name]
            dim = extractor.dim if extractor.dim is not None else spec.nominal_dim
            table.append({"name": spec.name, "modality": spec.modality, "dim": dim})
        return table

    def extract_video(
        self,
        video_path: Path,
        audio_path: Path,
        augment_seed: int | None = None,
    ) -> np.ndarray:
        """Per-second embeddings for one clip; rows ordered by second.

        With augment_seed set, frames pass through the seeded image
        transforms before visual extraction; audio stays untouched.
        """
        seconds = self.segments_per_video
        frames = middle_frames(video_path, seconds)
        if augment_seed is not None:
            frames = augment_frames(frames, self.augment, augment_seed)
        windows, rate = audio_windows(audio_path, seconds)

        blocks: list[np.ndarray] = []
        for spec in self.specs:
            extractor = self.extractors[spec.name]
            if spec.modality == VISUAL:
                block = extractor.embed_frames(frames)
            else:
                rows = [
                    extractor.embed_window(windows[t], rate).mean(axis=0)
                    for t in range(seconds)
                ]
                block = np.stack(rows)
            block = np.asarray(block, dtype=np.float32)
            if block.shape[0] != seconds:
                raise MediaError(
                    f"{spec.name} produced {block.shape[0]} rows for "
                    f"{video_path.name}, expected {seconds}"
                )
            if not np.all(np.isfinite(block)):
                raise MediaError(f"{spec.name} produced non-finite values")
            blocks.append(block)
        return np.hstack(blocks)


def run_extraction(
    entries: list[ManifestEntry],
    extractor: Extractor,
    video_dir: Path,
    audio_dir: Path,
    augment_train: bool = False,
    augment_seed: int = 0,
) -> ExtractionResult:
    """Extract every manifest entry; optionally add augmented train duplicates."""
    result = ExtractionResult(
        sources=extractor.source_table(),
        segments_per_video=extractor.segments_per_video,
    )
    for entry in entries:
        try:
            video_path = find_video(video_dir, entry.video_id)
            audio_path = find_audio(audio_dir, entry.video_id)
            segments = extractor.extract_video(video_path, audio_path)
            result.records.append(
                ExtractedRecord(entry.video_id, entry.scene, False, segments)
            )
            if augment_train and entry.split == "train":
                seed = per_video_seed(augment_seed, entry.video_id)
                augmented = extractor.extract_video(
                    video_path, audio_path, augment_seed=seed
                )
                result.records.append(
                    ExtractedRecord(entry.video_id, entry.scene, True, augmented)
                )
        except MediaError as exc:
            result.errors.append(ExtractionErrorRecord(entry.video_id, str(exc)))
    # The source table may gain probed dims only after the first real call.
    result.sources = extractor.source_table()
    return result


def per_video_seed(base_seed: int, video_id: str) -> int:
    import hashlib

    digest = hashlib.sha256(f"{base_seed}:{video_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def write_store(result: ExtractionResult, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    width = sum(s["dim"] for s in result.sources)
    for record in result.records:
        expected = (result.segments_per_video, width)
        if record.segments.shape != expected:
            raise ValueError(
                f"{record.video_id}: segments shape {record.segments.shape} "
                f"!= {expected}"
            )
    index = {
        "segments_per_video": result.segments_per_video,
        "sources": result.sources,
        "videos": [
            {
                "video_id": r.video_id,
                "class": r.scene,
                "augmented": r.augmented,
                "row_offset": i * result.segments_per_video,
            }
            for i, r in enumerate(result.records)
        ],
    }
    with open(out_dir / INDEX_FILE, "w", encoding="utf-8", newline="\n") as f:
        json.dump(index, f, indent=2)
        f.write("\n")
    if result.records:
        data = np.concatenate([r.segments for r in result.records], axis=0)
    else:
        data = np.empty((0, width), dtype=np.float32)
    with open(out_dir / DATA_FILE, "wb") as f:
        f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    if result.errors:
        with open(out_dir / "errors.jsonl", "w", encoding="utf-8", newline="\n") as f:
            for e in result.errors:
                f.write(json.dumps(
                    {"video_id": e.video_id, "reason": e.reason}
                ) + "\n")


def merge_shards(shard_dirs: list[str | Path], out_dir: str | Path) -> None:
    """Concatenate shard stores (disjoint videos) into one, in shard order."""
    shard_dirs = [Path(d) for d in shard_dirs]
    merged: ExtractionResult | None = None
    arrays: list[np.ndarray] = []
    for shard in shard_dirs:
        with open(shard / INDEX_FILE, "r", encoding="utf-8") as f:
            index = json.load(f)
        width = sum(s["dim"] for s in index["sources"])
        data = np.fromfile(shard / DATA_FILE, dtype="<f4").reshape(-1, width)
        if merged is None:
            merged = ExtractionResult(
                sources=index["sources"],
                segments_per_video=index["segments_per_video"],
            )
        else:
            if index["sources"] != merged.sources:
                raise ValueError(f"{shard}: source table differs between shards")
            if index["segments_per_video"] != merged.segments_per_video:
                raise ValueError(f"{shard}: segments_per_video differs")
        T = index["segments_per_video"]
        for video in index["videos"]:
            offset = video["row_offset"]
            merged.records.append(
                ExtractedRecord(
                    video["video_id"], video["class"], bool(video["augmented"]),
                    data[offset : offset + T],
                )
            )
    if merged is None:
        raise ValueError("no shards to merge")
    write_store(merged, out_dir)
