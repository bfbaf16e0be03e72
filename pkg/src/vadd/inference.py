"""Per-second classification, video-level voting and discrepancy verdicts.

A video's ten per-second rows are classified independently; the video label
is the majority argmax, with ties broken by the higher mean probability
among the tied classes and then by the lower class index. A video is
flagged manipulated when its visual-only and audio-only classifications
disagree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError
from .fusion import FusionModel, forward_batch
from .store import AUDIO, VISUAL, EmbeddingRecord, EmbeddingStore
from .protocol import SwapPlan


@dataclass
class PredictionResult:
    video_id: str
    per_segment: list[tuple[int, np.ndarray]]
    voted_class: int
    vote_confidence: float


@dataclass(frozen=True)
class LabeledVerdict:
    video_id: str
    visual_class: int
    audio_class: int
    ground_truth_manipulated: bool | None = None

    @property
    def manipulated(self) -> bool:
        return self.visual_class != self.audio_class

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "visual_class": self.visual_class,
            "audio_class": self.audio_class,
            "manipulated": self.manipulated,
            "ground_truth": (
                None
                if self.ground_truth_manipulated is None
                else ("manipulated" if self.ground_truth_manipulated else "unmodified")
            ),
        }


def vote(probs: np.ndarray) -> tuple[int, float]:
    """Majority vote over per-segment argmaxes; returns (class, confidence)."""
    arg = probs.argmax(axis=1)
    counts = np.bincount(arg, minlength=probs.shape[1])
    top = counts.max()
    tied = np.flatnonzero(counts == top)
    if len(tied) == 1:
        winner = int(tied[0])
    else:
        means = probs[:, tied].mean(axis=0)
        best = means.max()
        # Lowest index among classes whose mean probability ties as well.
        winner = int(tied[np.flatnonzero(means == best)[0]])
    return winner, float(probs[:, winner].mean())


def _check_sources(model: FusionModel, sources) -> None:
    expected = tuple((s.name, s.modality, s.dim) for s in model.config.sources)
    got = tuple((s.name, s.modality, s.dim) for s in sources)
    if expected != got:
        raise ContractError(
            f"model sources {expected} do not match the selected store sources {got}"
        )


def predict_video(
    model: FusionModel,
    record: EmbeddingRecord,
    store: EmbeddingStore,
    modality: str | None = None,
) -> PredictionResult:
    """Classify every segment of a record and vote; inference mode."""
    _check_sources(model, store.sources_for(modality))
    rows = record.segments[:, store.column_slice(modality)]
    cache = forward_batch(model, rows, training_mode=False)
    probs = cache.probs
    voted, confidence = vote(probs)
    per_segment = [(int(p.argmax()), p) for p in probs]
    return PredictionResult(
        video_id=record.video_id,
        per_segment=per_segment,
        voted_class=voted,
        vote_confidence=confidence,
    )


def detect_discrepancy(
    vsc_model: FusionModel,
    asc_model: FusionModel,
    record: EmbeddingRecord,
    store: EmbeddingStore,
    labels: list[str],
) -> LabeledVerdict:
    """Compare the independent visual and audio classifications of one video."""
    if vsc_model.config.num_classes != len(labels) or asc_model.config.num_classes != len(labels):
        raise ContractError(
            "models and label list disagree on the number of classes"
        )
    visual = predict_video(vsc_model, record, store, VISUAL)
    audio = predict_video(asc_model, record, store, AUDIO)
    return LabeledVerdict(
        video_id=record.video_id,
        visual_class=visual.voted_class,
        audio_class=audio.voted_class,
    )


@dataclass
class DetectionRun:
    verdicts: list[LabeledVerdict]
    skipped: list[str]


def detect_batch(
    vsc_model: FusionModel,
    asc_model: FusionModel,
    store: EmbeddingStore,
    plan: SwapPlan,
    labels: list[str],
    vote_remap: list[int] | None = None,
) -> DetectionRun:
    """Score every plan item, pairing visual and audio streams per the plan.

    A swap pair (a, b) yields two manipulated items: a's visuals with b's
    audio and vice versa, evaluated purely at the embedding level. Videos
    missing from the store are reported in `skipped` and their items
    dropped. With vote_remap set, each model vote is mapped through it
    before the comparison (coarsened comparison); `labels` then names the
    remapped space.
    """
    if vote_remap is None:
        if (vsc_model.config.num_classes != len(labels)
                or asc_model.config.num_classes != len(labels)):
            raise ContractError(
                "models and label list disagree on the number of classes"
            )
    else:
        if (len(vote_remap) != vsc_model.config.num_classes
                or len(vote_remap) != asc_model.config.num_classes):
            raise ContractError("vote_remap length must match the model classes")
        if any(not 0 <= v < len(labels) for v in vote_remap):
            raise ContractError("vote_remap targets outside the label list")

    needed = set(plan.unmodified)
    for a, b in plan.swaps:
        needed.add(a)
        needed.add(b)
    visual_votes: dict[str, int] = {}
    audio_votes: dict[str, int] = {}
    skipped: list[str] = []
    for vid in sorted(needed):
        record = store.get(vid, augmented=False)
        if record is None:
            skipped.append(vid)
            continue
        v = predict_video(vsc_model, record, store, VISUAL).voted_class
        a = predict_video(asc_model, record, store, AUDIO).voted_class
        if vote_remap is not None:
            v = vote_remap[v]
            a = vote_remap[a]
        visual_votes[vid] = v
        audio_votes[vid] = a

    verdicts: list[LabeledVerdict] = []
    for vid in plan.unmodified:
        if vid not in visual_votes:
            continue
        verdicts.append(
            LabeledVerdict(
                video_id=vid,
                visual_class=visual_votes[vid],
                audio_class=audio_votes[vid],
                ground_truth_manipulated=False,
            )
        )
    for a, b in plan.swaps:
        for visual_id, audio_id in ((a, b), (b, a)):
            if visual_id not in visual_votes or audio_id not in audio_votes:
                continue
            verdicts.append(
                LabeledVerdict(
                    video_id=visual_id,
                    visual_class=visual_votes[visual_id],
                    audio_class=audio_votes[audio_id],
                    ground_truth_manipulated=True,
                )
            )
    return DetectionRun(verdicts=verdicts, skipped=skipped)


def write_verdicts(verdicts: list[LabeledVerdict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for v in verdicts:
            f.write(json.dumps(v.to_dict(), separators=(",", ":")) + "\n")


def load_verdicts(path: str | Path) -> list[LabeledVerdict]:
    verdicts = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            gt = obj.get("ground_truth")
            verdicts.append(
                LabeledVerdict(
                    video_id=obj["video_id"],
                    visual_class=int(obj["visual_class"]),
                    audio_class=int(obj["audio_class"]),
                    ground_truth_manipulated=(
                        None if gt is None else gt == "manipulated"
                    ),
                )
            )
    return verdicts
