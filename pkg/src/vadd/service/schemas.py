"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class VideoEntryModel(BaseModel):
    video_id: str
    scene: str = Field(alias="class")
    duration_s: float = 10.0
    split: str = "test"

    model_config = {"populate_by_name": True}


class PlanRequest(BaseModel):
    entries: list[VideoEntryModel]
    seed: int = 0
    split: str = "test"


class ClassSummaryModel(BaseModel):
    scene: str
    total: int
    unmodified: int
    manipulated: int


class PlanResponse(BaseModel):
    seed: int
    source_checksum: str
    taxonomy: str
    unmodified: list[str]
    swaps: list[tuple[str, str]]
    summary: list[ClassSummaryModel]


class PlanValidateRequest(BaseModel):
    entries: list[VideoEntryModel]
    seed: int
    source_checksum: str
    taxonomy: str = "10class"
    unmodified: list[str]
    swaps: list[tuple[str, str]]
    split: str = "test"


class ViolationModel(BaseModel):
    kind: str
    message: str


class PlanValidateResponse(BaseModel):
    valid: bool
    violations: list[ViolationModel]


class VerdictModel(BaseModel):
    video_id: str
    visual_class: int
    audio_class: int
    manipulated: bool
    ground_truth: str | None = None


class DetectionEvalRequest(BaseModel):
    verdicts: list[VerdictModel]


class ClassificationEvalRequest(BaseModel):
    pairs: list[tuple[str, str]]


class ConfusionModel(BaseModel):
    classes: list[str]
    counts: list[list[int]]


class ClassificationEvalResponse(BaseModel):
    accuracy: float
    confusion: ConfusionModel


class SourceModel(BaseModel):
    name: str
    modality: str
    dim: int


class SynthRequest(BaseModel):
    num_classes: int = 3
    videos_per_class: int = 20
    noise_sigma: float = 0.1
    segment_jitter_sigma: float = 0.05
    segments_per_video: int = 10
    train_fraction: float = 0.8
    augment_train: bool = False
    seed: int = 0
    sources: list[SourceModel] | None = None
    out_dir: str


class SynthResponse(BaseModel):
    out_dir: str
    videos: int
    records: int
    classes: list[str]
    width: int


class TrainHyperModel(BaseModel):
    d_model: int = 256
    num_heads: int = 4
    fc_hidden: int = 512
    dropout_rate: float = 0.3
    es_chunk_tokens: int = 4
    init_seed: int = 0
    batch_size: int = 32
    epochs: int = 20
    lr_start: float = 0.001
    lr_end: float = 0.00001
    lr_end_epoch: int = 19
    momentum: float = 0.0
    shuffle_seed: int = 0


class TrainRequest(BaseModel):
    store_dir: str
    manifest_path: str
    modality: str = "av"
    attention: str = "ls"
    taxonomy: str = "10class"
    use_augmented: bool = True
    double_fc: bool = True
    hyper: TrainHyperModel = TrainHyperModel()
    out_checkpoint: str


class EpochStatsModel(BaseModel):
    epoch: int
    lr: float
    loss: float
    accuracy: float


class TrainResponse(BaseModel):
    checkpoint: str
    labels: list[str]
    train_accuracy: float
    test_accuracy: float | None
    log: list[EpochStatsModel]


class DetectRequest(BaseModel):
    store_dir: str
    plan_path: str
    vsc_checkpoint: str
    asc_checkpoint: str
    comparison: str = "native"
    out_verdicts: str | None = None


class DetectResponse(BaseModel):
    verdicts: list[VerdictModel]
    skipped: list[str]
    report: dict


class ScenesResponse(BaseModel):
    classes: list[str]
    coarse_classes: list[str]
    coarse_map: dict[str, str]


class HealthResponse(BaseModel):
    status: str
    version: str
