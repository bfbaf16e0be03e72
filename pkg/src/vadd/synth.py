"""Synthetic embedding corpus with controllable class separability.

Each (class, source) pair gets a fixed random unit prototype. A video's
per-second vector is prototype + per-video noise + per-segment jitter, so
noise_sigma controls how much classes overlap and segment_jitter_sigma how
much a video's own seconds vary. Visual and audio sources share the
video's class, which makes every generated video internally consistent.
A nearest-prototype classifier over the saved prototypes serves as the
independent accuracy ceiling for trained models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError
from .protocol import Manifest, SCENE_CLASSES, VideoEntry
from .store import (
    AUDIO,
    VISUAL,
    EmbeddingRecord,
    EmbeddingStore,
    SourceSpec,
)

PROTOTYPES_FILE = "prototypes.json"

DEFAULT_SOURCES = (
    SourceSpec("vit", VISUAL, 1000),
    SourceSpec("clip", VISUAL, 1024),
    SourceSpec("resnet_places", VISUAL, 2048),
    SourceSpec("openl3", AUDIO, 512),
    SourceSpec("pann", AUDIO, 512),
    SourceSpec("iov", AUDIO, 128),
)


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 3
    videos_per_class: int = 20
    sources: tuple[SourceSpec, ...] = DEFAULT_SOURCES
    noise_sigma: float = 0.1
    segment_jitter_sigma: float = 0.05
    seed: int = 0
    segments_per_video: int = 10
    train_fraction: float = 0.8
    augment_train: bool = False
    augment_sigma: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if self.num_classes < 2:
            raise ContractError("need at least 2 classes")
        if self.videos_per_class < 1:
            raise ContractError("need at least 1 video per class")
        modalities = {s.modality for s in self.sources}
        if VISUAL not in modalities or AUDIO not in modalities:
            raise ContractError("need at least one source per modality")
        if self.noise_sigma < 0 or self.segment_jitter_sigma < 0 or self.augment_sigma < 0:
            raise ContractError("sigmas must be nonnegative")
        if not 0 < self.train_fraction < 1:
            raise ContractError("train_fraction must lie in (0, 1)")
        if self.segments_per_video < 1:
            raise ContractError("segments_per_video must be positive")


def class_names(num_classes: int) -> list[str]:
    if num_classes <= len(SCENE_CLASSES):
        return list(SCENE_CLASSES[:num_classes])
    extra = [f"scene_{i:02d}" for i in range(num_classes - len(SCENE_CLASSES))]
    return list(SCENE_CLASSES) + extra


@dataclass
class Prototypes:
    classes: list[str]
    sources: tuple[SourceSpec, ...]
    vectors: dict[str, dict[str, np.ndarray]]  # class -> source -> unit vector

    def concat(self, scene: str, modality: str | None = None) -> np.ndarray:
        parts = [
            self.vectors[scene][s.name]
            for s in self.sources
            if modality is None or s.modality == modality
        ]
        return np.concatenate(parts)

    def save(self, path: str | Path) -> None:
        obj = {
            "classes": self.classes,
            "sources": [s.to_dict() for s in self.sources],
            "vectors": {
                scene: {name: v.tolist() for name, v in per_source.items()}
                for scene, per_source in self.vectors.items()
            },
        }
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(obj, f)
            f.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "Prototypes":
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
        sources = tuple(
            SourceSpec(s["name"], s["modality"], int(s["dim"]))
            for s in obj["sources"]
        )
        vectors = {
            scene: {
                name: np.asarray(vals, dtype=np.float32)
                for name, vals in per_source.items()
            }
            for scene, per_source in obj["vectors"].items()
        }
        return cls(classes=list(obj["classes"]), sources=sources, vectors=vectors)


@dataclass
class SynthDataset:
    manifest: Manifest
    store: EmbeddingStore
    prototypes: Prototypes


def generate(config: SynthConfig) -> SynthDataset:
    """Deterministically build (manifest, store, prototypes) for one seed."""
    rng = np.random.default_rng(np.uint64(config.seed))
    names = class_names(config.num_classes)
    T = config.segments_per_video

    prototypes: dict[str, dict[str, np.ndarray]] = {}
    for scene in names:
        per_source = {}
        for src in config.sources:
            v = rng.normal(size=src.dim)
            per_source[src.name] = (v / np.linalg.norm(v)).astype(np.float32)
        prototypes[scene] = per_source

    entries: list[VideoEntry] = []
    for scene in names:
        n = config.videos_per_class
        n_train = round(n * config.train_fraction)
        split_order = rng.permutation(n)
        splits = ["test"] * n
        for i in split_order[:n_train]:
            splits[i] = "train"
        for i in range(n):
            entries.append(
                VideoEntry(
                    video_id=f"{scene}_{i:04d}",
                    scene=scene,
                    duration_s=float(T),
                    split=splits[i],
                )
            )
    manifest = Manifest(entries)

    store = EmbeddingStore(config.sources, T)
    augmented_blocks: list[EmbeddingRecord] = []
    for e in entries:
        blocks = []
        aug_parts = []
        for src in config.sources:
            proto = prototypes[e.scene][src.name].astype(np.float64)
            offset = rng.normal(size=src.dim) * config.noise_sigma
            jitter = rng.normal(size=(T, src.dim)) * config.segment_jitter_sigma
            block = (proto + offset + jitter).astype(np.float32)
            blocks.append(block)
            if config.augment_train and e.split == "train":
                if src.modality == VISUAL:
                    extra = rng.normal(size=(T, src.dim)) * config.augment_sigma
                    aug_parts.append((block.astype(np.float64) + extra).astype(np.float32))
                else:
                    # Augmentation is image-space; audio vectors are copied.
                    aug_parts.append(block)
        store.add(
            EmbeddingRecord(
                video_id=e.video_id,
                scene=e.scene,
                augmented=False,
                segments=np.hstack(blocks),
            )
        )
        if aug_parts:
            augmented_blocks.append(
                EmbeddingRecord(
                    video_id=e.video_id,
                    scene=e.scene,
                    augmented=True,
                    segments=np.hstack(aug_parts),
                )
            )
    for record in augmented_blocks:
        store.add(record)

    return SynthDataset(
        manifest=manifest,
        store=store,
        prototypes=Prototypes(
            classes=names, sources=config.sources, vectors=prototypes
        ),
    )


def write_dataset(dataset: SynthDataset, path: str | Path) -> None:
    """Write manifest.jsonl, the store files and prototypes side by side."""
    from .store import write_store

    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    dataset.manifest.save(path / "manifest.jsonl")
    write_store(dataset.store, path)
    dataset.prototypes.save(path / PROTOTYPES_FILE)


@dataclass
class OraclePrediction:
    video_id: str
    scene: str
    per_segment: list[str]
    voted: str


def oracle_classify(
    store: EmbeddingStore,
    prototypes: Prototypes,
    modality: str | None = None,
    split_ids: set[str] | None = None,
) -> list[OraclePrediction]:
    """Nearest-prototype (cosine) classification of every stored segment."""
    proto_matrix = np.stack(
        [prototypes.concat(scene, modality) for scene in prototypes.classes]
    ).astype(np.float64)
    proto_matrix /= np.linalg.norm(proto_matrix, axis=1, keepdims=True)
    cols = store.column_slice(modality)
    out = []
    for record in store.records:
        if record.augmented:
            continue
        if split_ids is not None and record.video_id not in split_ids:
            continue
        X = record.segments[:, cols].astype(np.float64)
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        sims = (X / norms) @ proto_matrix.T
        seg_idx = sims.argmax(axis=1)
        votes = np.bincount(seg_idx, minlength=len(prototypes.classes))
        out.append(
            OraclePrediction(
                video_id=record.video_id,
                scene=record.scene,
                per_segment=[prototypes.classes[i] for i in seg_idx],
                voted=prototypes.classes[int(votes.argmax())],
            )
        )
    return out


def oracle_accuracy(
    predictions: list[OraclePrediction], per_segment: bool = True
) -> float:
    if not predictions:
        raise ContractError("no predictions")
    if per_segment:
        total = sum(len(p.per_segment) for p in predictions)
        correct = sum(
            sum(1 for s in p.per_segment if s == p.scene) for p in predictions
        )
        return correct / total
    correct = sum(1 for p in predictions if p.voted == p.scene)
    return correct / len(predictions)
