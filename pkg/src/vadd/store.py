"""On-disk store of per-second embedding vectors from several sources.

Layout: a directory with `index.json` describing sources and videos, and
`data.bin` holding one row per (video, second) as little-endian float32,
sources concatenated in index order. Offsets count rows. The format is
byte-stable: writing the same store twice produces identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ContractError, FormatError, ValidationError

INDEX_FILE = "index.json"
DATA_FILE = "data.bin"

VISUAL = "visual"
AUDIO = "audio"
MODALITIES = (VISUAL, AUDIO)


@dataclass(frozen=True)
class SourceSpec:
    name: str
    modality: str
    dim: int

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValidationError(f"source {self.name!r}: bad modality {self.modality!r}")
        if self.dim <= 0:
            raise ValidationError(f"source {self.name!r}: dim must be positive")

    def to_dict(self) -> dict:
        return {"name": self.name, "modality": self.modality, "dim": self.dim}


@dataclass
class EmbeddingRecord:
    video_id: str
    scene: str
    augmented: bool
    segments: np.ndarray  # [segments_per_video x total_width], float32

    def key(self) -> tuple[str, bool]:
        return (self.video_id, self.augmented)


class EmbeddingStore:
    def __init__(
        self,
        sources: Iterable[SourceSpec],
        segments_per_video: int,
        records: Iterable[EmbeddingRecord] = (),
    ):
        self.sources = tuple(sources)
        if not self.sources:
            raise ValidationError("store needs at least one source")
        names = [s.name for s in self.sources]
        if len(set(names)) != len(names):
            raise ValidationError("source names must be unique")
        if segments_per_video <= 0:
            raise ValidationError("segments_per_video must be positive")
        self.segments_per_video = int(segments_per_video)
        self.records: list[EmbeddingRecord] = []
        self._index: dict[tuple[str, bool], int] = {}
        for r in records:
            self.add(r)

    @property
    def width(self) -> int:
        return sum(s.dim for s in self.sources)

    def __len__(self) -> int:
        return len(self.records)

    def add(self, record: EmbeddingRecord) -> None:
        seg = np.asarray(record.segments, dtype=np.float32)
        if seg.ndim != 2 or seg.shape != (self.segments_per_video, self.width):
            raise ValidationError(
                f"{record.video_id!r}: segments shape {seg.shape} != "
                f"({self.segments_per_video}, {self.width})"
            )
        if not np.all(np.isfinite(seg)):
            raise ValidationError(f"{record.video_id!r}: non-finite embedding values")
        if record.key() in self._index:
            raise ValidationError(
                f"duplicate record for video {record.video_id!r} "
                f"(augmented={record.augmented})"
            )
        record.segments = seg
        self._index[record.key()] = len(self.records)
        self.records.append(record)

    def get(self, video_id: str, augmented: bool = False) -> EmbeddingRecord | None:
        i = self._index.get((video_id, augmented))
        return None if i is None else self.records[i]

    def column_slice(self, modality: str | None) -> np.ndarray:
        """Column indices selecting the sources of one modality (or all)."""
        cols = []
        offset = 0
        for s in self.sources:
            if modality is None or s.modality == modality:
                cols.extend(range(offset, offset + s.dim))
            offset += s.dim
        return np.asarray(cols, dtype=np.intp)

    def sources_for(self, modality: str | None) -> tuple[SourceSpec, ...]:
        if modality is None:
            return self.sources
        if modality not in MODALITIES:
            raise ContractError(f"unknown modality filter {modality!r}")
        return tuple(s for s in self.sources if s.modality == modality)

    def select(
        self,
        modality: str | None = None,
        split_ids: set[str] | None = None,
        include_augmented: bool = False,
    ) -> "DatasetView":
        return DatasetView(self, modality, split_ids, include_augmented)


class DatasetView:
    """Deterministic row iterator over a filtered store.

    Yields (video_id, segment_index, vector, scene) in index order, then
    segment order. Vectors are restricted to the selected modality's
    sources. Unknown ids in split_ids land in `warnings` rather than
    raising.
    """

    def __init__(
        self,
        store: EmbeddingStore,
        modality: str | None,
        split_ids: set[str] | None,
        include_augmented: bool,
    ):
        self.store = store
        self.modality = modality
        self.columns = store.column_slice(modality)
        self.sources = store.sources_for(modality)
        self.warnings: set[str] = set()
        if split_ids is not None:
            known = {r.video_id for r in store.records}
            self.warnings = set(split_ids) - known
        self.record_indices = [
            i
            for i, r in enumerate(store.records)
            if (split_ids is None or r.video_id in split_ids)
            and (include_augmented or not r.augmented)
        ]

    @property
    def width(self) -> int:
        return int(len(self.columns))

    def __len__(self) -> int:
        return len(self.record_indices) * self.store.segments_per_video

    def __iter__(self) -> Iterator[tuple[str, int, np.ndarray, str]]:
        for i in self.record_indices:
            r = self.store.records[i]
            block = r.segments[:, self.columns]
            for t in range(self.store.segments_per_video):
                yield r.video_id, t, block[t], r.scene

    def records(self) -> list[EmbeddingRecord]:
        return [self.store.records[i] for i in self.record_indices]

    def to_arrays(self, label_to_index: dict[str, int]):
        """Materialize (X, y) plus row provenance for training loops."""
        n = len(self)
        X = np.empty((n, self.width), dtype=np.float32)
        y = np.empty(n, dtype=np.int64)
        video_ids: list[str] = []
        row = 0
        T = self.store.segments_per_video
        for i in self.record_indices:
            r = self.store.records[i]
            X[row : row + T] = r.segments[:, self.columns]
            y[row : row + T] = label_to_index[r.scene]
            video_ids.extend([r.video_id] * T)
            row += T
        return X, y, video_ids


def write_store(store: EmbeddingStore, path: str | Path) -> None:
    """Serialize a store; refuses to write if any invariant is broken."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    width = store.width
    for r in store.records:
        if r.segments.shape != (store.segments_per_video, width):
            raise ValidationError(
                f"{r.video_id!r}: segments shape {r.segments.shape} inconsistent"
            )
        if not np.all(np.isfinite(r.segments)):
            raise ValidationError(f"{r.video_id!r}: non-finite embedding values")

    index = {
        "segments_per_video": store.segments_per_video,
        "sources": [s.to_dict() for s in store.sources],
        "videos": [
            {
                "video_id": r.video_id,
                "class": r.scene,
                "augmented": r.augmented,
                "row_offset": i * store.segments_per_video,
            }
            for i, r in enumerate(store.records)
        ],
    }
    with open(path / INDEX_FILE, "w", encoding="utf-8", newline="\n") as f:
        json.dump(index, f, indent=2)
        f.write("\n")
    data = np.concatenate(
        [r.segments for r in store.records], axis=0
    ) if store.records else np.empty((0, width), dtype=np.float32)
    with open(path / DATA_FILE, "wb") as f:
        f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def open_store(path: str | Path) -> EmbeddingStore:
    """Load and fully validate a store directory."""
    path = Path(path)
    index_path = path / INDEX_FILE
    data_path = path / DATA_FILE
    if not index_path.exists():
        raise FormatError(f"missing {INDEX_FILE} in {path}")
    if not data_path.exists():
        raise FormatError(f"missing {DATA_FILE} in {path}")
    try:
        with open(index_path, "r", encoding="utf-8") as f:
            index = json.load(f)
    except json.JSONDecodeError as exc:
        raise FormatError(f"corrupt {INDEX_FILE}: {exc.msg}") from None

    for key in ("segments_per_video", "sources", "videos"):
        if key not in index:
            raise FormatError(f"{INDEX_FILE} misses field {key!r}")
    try:
        sources = tuple(
            SourceSpec(s["name"], s["modality"], int(s["dim"]))
            for s in index["sources"]
        )
    except (KeyError, TypeError, ValidationError) as exc:
        raise FormatError(f"bad source declaration: {exc}") from None

    T = int(index["segments_per_video"])
    store = EmbeddingStore(sources, T)
    width = store.width

    raw = np.fromfile(data_path, dtype="<f4")
    if raw.size % width != 0:
        raise FormatError(
            f"{DATA_FILE} holds {raw.size} values, not a multiple of row width {width}"
        )
    total_rows = raw.size // width
    data = raw.reshape(total_rows, width)

    expected_rows = len(index["videos"]) * T
    if total_rows != expected_rows:
        detail = ""
        if total_rows < expected_rows:
            first_short = index["videos"][total_rows // T]
            detail = f"; data ends inside video {first_short.get('video_id')!r}"
        raise FormatError(
            f"{DATA_FILE} has {total_rows} rows but the index declares "
            f"{expected_rows} ({len(index['videos'])} videos x {T} segments)"
            f"{detail}"
        )

    for i, v in enumerate(index["videos"]):
        for key in ("video_id", "class", "augmented", "row_offset"):
            if key not in v:
                raise FormatError(f"video entry {i} misses field {key!r}")
        offset = int(v["row_offset"])
        if offset != i * T:
            raise FormatError(
                f"video {v['video_id']!r}: row_offset {offset} out of order "
                f"(expected {i * T})"
            )
        if offset + T > total_rows:
            raise FormatError(
                f"video {v['video_id']!r}: rows [{offset}, {offset + T}) exceed "
                f"data length {total_rows}"
            )
        block = data[offset : offset + T]
        if not np.all(np.isfinite(block)):
            raise FormatError(f"video {v['video_id']!r}: non-finite embedding values")
        store.add(
            EmbeddingRecord(
                video_id=v["video_id"],
                scene=v["class"],
                augmented=bool(v["augmented"]),
                segments=block.copy(),
            )
        )
    return store
