"""HTTP service wrapping the core toolkit.

Request bodies carry either inline data (plan generation, scoring) or
server-side paths (stores, checkpoints), mirroring the CLI's inputs.
Domain errors map to 400, missing files to 404.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__, workflows
from ..errors import VaddError
from ..inference import LabeledVerdict, write_verdicts
from ..metrics import score_classification, score_detection
from ..protocol import (
    COARSE_CLASSES,
    DEFAULT_THREE_CLASS_MAP,
    Manifest,
    SCENE_CLASSES,
    SwapPlan,
    VideoEntry,
    load_swap_plan,
    load_manifest,
    validate_swap_plan,
)
from ..store import SourceSpec, open_store
from ..synth import DEFAULT_SOURCES, SynthConfig, generate, write_dataset
from ..training import TrainConfig, load_checkpoint, save_checkpoint
from . import schemas

app = FastAPI(
    title="vadd",
    description="Audio-visual scene discrepancy detection service",
    version=__version__,
)


def _manifest_from(entries: list[schemas.VideoEntryModel]) -> Manifest:
    return Manifest(
        VideoEntry(
            video_id=e.video_id,
            scene=e.scene,
            duration_s=e.duration_s,
            split=e.split,
        )
        for e in entries
    )


def _wrap(fn):
    try:
        return fn()
    except FileNotFoundError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from None
    except (VaddError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None


@app.get("/health", response_model=schemas.HealthResponse)
def health():
    return schemas.HealthResponse(status="ok", version=__version__)


@app.get("/scenes", response_model=schemas.ScenesResponse)
def scenes():
    return schemas.ScenesResponse(
        classes=list(SCENE_CLASSES),
        coarse_classes=list(COARSE_CLASSES),
        coarse_map=dict(DEFAULT_THREE_CLASS_MAP),
    )


@app.post("/plan/generate", response_model=schemas.PlanResponse)
def plan_generate(request: schemas.PlanRequest):
    def run():
        manifest = _manifest_from(request.entries)
        result = workflows.build_plan(manifest, request.seed, request.split)
        return schemas.PlanResponse(
            seed=result.plan.seed,
            source_checksum=result.plan.source_checksum,
            taxonomy=result.plan.taxonomy,
            unmodified=result.plan.unmodified,
            swaps=result.plan.swaps,
            summary=[
                schemas.ClassSummaryModel(
                    scene=s.scene,
                    total=s.total,
                    unmodified=s.unmodified,
                    manipulated=s.manipulated,
                )
                for s in result.summary
            ],
        )

    return _wrap(run)


@app.post("/plan/validate", response_model=schemas.PlanValidateResponse)
def plan_validate(request: schemas.PlanValidateRequest):
    def run():
        manifest = _manifest_from(request.entries)
        subset = manifest if request.split == "all" else manifest.subset(request.split)
        plan = SwapPlan(
            seed=request.seed,
            source_checksum=request.source_checksum,
            unmodified=request.unmodified,
            swaps=[tuple(pair) for pair in request.swaps],
            taxonomy=request.taxonomy,
        )
        report = validate_swap_plan(plan, subset)
        return schemas.PlanValidateResponse(
            valid=report.valid,
            violations=[
                schemas.ViolationModel(kind=v.kind, message=v.message)
                for v in report.violations
            ],
        )

    return _wrap(run)


@app.post("/eval/detection")
def eval_detection(request: schemas.DetectionEvalRequest):
    def run():
        verdicts = [
            LabeledVerdict(
                video_id=v.video_id,
                visual_class=v.visual_class,
                audio_class=v.audio_class,
                ground_truth_manipulated=(
                    None if v.ground_truth is None else v.ground_truth == "manipulated"
                ),
            )
            for v in request.verdicts
        ]
        return score_detection(verdicts).to_dict()

    return _wrap(run)


@app.post("/eval/classification", response_model=schemas.ClassificationEvalResponse)
def eval_classification(request: schemas.ClassificationEvalRequest):
    def run():
        accuracy, cm = score_classification([tuple(p) for p in request.pairs])
        return schemas.ClassificationEvalResponse(
            accuracy=accuracy,
            confusion=schemas.ConfusionModel(
                classes=list(cm.classes), counts=[list(r) for r in cm.counts]
            ),
        )

    return _wrap(run)


@app.post("/synth", response_model=schemas.SynthResponse)
def synth(request: schemas.SynthRequest):
    def run():
        sources = (
            DEFAULT_SOURCES
            if request.sources is None
            else tuple(SourceSpec(s.name, s.modality, s.dim) for s in request.sources)
        )
        config = SynthConfig(
            num_classes=request.num_classes,
            videos_per_class=request.videos_per_class,
            sources=sources,
            noise_sigma=request.noise_sigma,
            segment_jitter_sigma=request.segment_jitter_sigma,
            seed=request.seed,
            segments_per_video=request.segments_per_video,
            train_fraction=request.train_fraction,
            augment_train=request.augment_train,
        )
        dataset = generate(config)
        write_dataset(dataset, request.out_dir)
        return schemas.SynthResponse(
            out_dir=request.out_dir,
            videos=len(dataset.manifest),
            records=len(dataset.store),
            classes=dataset.prototypes.classes,
            width=dataset.store.width,
        )

    return _wrap(run)


@app.post("/train", response_model=schemas.TrainResponse)
def train_endpoint(request: schemas.TrainRequest):
    def run():
        store = open_store(request.store_dir)
        manifest = load_manifest(request.manifest_path)
        h = request.hyper
        train_cfg = TrainConfig(
            batch_size=h.batch_size,
            epochs=h.epochs,
            lr_start=h.lr_start,
            lr_end=h.lr_end,
            lr_end_epoch=h.lr_end_epoch,
            momentum=h.momentum,
            shuffle_seed=h.shuffle_seed,
        )
        result = workflows.train_classifier(
            store,
            manifest,
            modality=request.modality,
            attention=request.attention,
            taxonomy=request.taxonomy,
            use_augmented=request.use_augmented,
            double_fc=request.double_fc,
            d_model=h.d_model,
            num_heads=h.num_heads,
            fc_hidden=h.fc_hidden,
            dropout_rate=h.dropout_rate,
            es_chunk_tokens=h.es_chunk_tokens,
            init_seed=h.init_seed,
            train_cfg=train_cfg,
        )
        save_checkpoint(
            request.out_checkpoint, result.model, train_cfg, train_cfg.epochs,
            result.labels,
        )
        return schemas.TrainResponse(
            checkpoint=request.out_checkpoint,
            labels=result.labels,
            train_accuracy=result.train_accuracy,
            test_accuracy=result.test_accuracy,
            log=[
                schemas.EpochStatsModel(
                    epoch=e.epoch, lr=e.lr, loss=e.mean_loss, accuracy=e.accuracy
                )
                for e in result.log.epochs
            ],
        )

    return _wrap(run)


@app.post("/detect", response_model=schemas.DetectResponse)
def detect(request: schemas.DetectRequest):
    def run():
        store = open_store(request.store_dir)
        plan = load_swap_plan(request.plan_path)
        vsc = load_checkpoint(request.vsc_checkpoint)
        asc = load_checkpoint(request.asc_checkpoint)
        result = workflows.run_detection(
            vsc, asc, store, plan, comparison=request.comparison
        )
        if request.out_verdicts:
            write_verdicts(result.run.verdicts, request.out_verdicts)
        return schemas.DetectResponse(
            verdicts=[
                schemas.VerdictModel(**v.to_dict()) for v in result.run.verdicts
            ],
            skipped=result.run.skipped,
            report=result.report.to_dict(),
        )

    return _wrap(run)
