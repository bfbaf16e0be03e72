"""Orchestration shared by the CLI and the HTTP service.

Each function composes the lower modules into one user-facing operation:
plan generation with its per-class summary, classifier training on a
store/manifest pair, plan-driven discrepancy detection, and the design
ablation grid.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError
from .fusion import (
    ModelConfig,
    FusionModel,
    attention_label,
    init_model,
    parse_attention,
)
from .inference import DetectionRun, detect_batch, predict_video
from .metrics import EvalReport, score_detection
from .protocol import (
    COARSE_CLASSES,
    Manifest,
    SwapPlan,
    Taxonomy,
    TEN_CLASS,
    THREE_CLASS,
    ClassSummary,
    coarsen,
    generate_swap_plan,
    summarize_plan,
)
from .store import EmbeddingStore
from .training import Checkpoint, TrainConfig, TrainLog, train

MODALITY_CHOICES = ("av", "visual", "audio")


def modality_filter(modality: str) -> str | None:
    if modality not in MODALITY_CHOICES:
        raise ContractError(
            f"unknown modality {modality!r}; expected one of {MODALITY_CHOICES}"
        )
    return None if modality == "av" else modality


def label_space(taxonomy_kind: str, manifest: Manifest) -> tuple[list[str], dict[str, int]]:
    """Class label list plus the scene-to-index map for the chosen taxonomy."""
    if taxonomy_kind == TEN_CLASS:
        labels = manifest.classes()
        return labels, {scene: i for i, scene in enumerate(labels)}
    if taxonomy_kind == THREE_CLASS:
        taxonomy = Taxonomy(kind=THREE_CLASS)
        labels = list(COARSE_CLASSES)
        index = {c: i for i, c in enumerate(labels)}
        return labels, {
            scene: index[coarsen(scene, taxonomy)] for scene in manifest.classes()
        }
    raise ContractError(f"unknown taxonomy {taxonomy_kind!r}")


@dataclass
class PlanResult:
    plan: SwapPlan
    summary: list[ClassSummary]


def build_plan(manifest: Manifest, seed: int, split: str = "test") -> PlanResult:
    subset = manifest if split == "all" else manifest.subset(split)
    if len(subset) == 0:
        raise ContractError(f"manifest holds no {split!r} items")
    plan = generate_swap_plan(subset, seed)
    return PlanResult(plan=plan, summary=summarize_plan(plan, subset))


@dataclass
class TrainResult:
    model: FusionModel
    labels: list[str]
    log: TrainLog
    train_accuracy: float
    test_accuracy: float | None


def train_classifier(
    store: EmbeddingStore,
    manifest: Manifest,
    modality: str = "av",
    attention: str = "ls",
    taxonomy: str = TEN_CLASS,
    use_augmented: bool = True,
    double_fc: bool = True,
    d_model: int = 256,
    num_heads: int = 4,
    fc_hidden: int = 512,
    dropout_rate: float = 0.3,
    es_chunk_tokens: int = 4,
    init_seed: int = 0,
    train_cfg: TrainConfig | None = None,
    evaluate_test: bool = True,
    progress=None,
) -> TrainResult:
    """Train one scene classifier on the manifest's train split."""
    filt = modality_filter(modality)
    labels, scene_to_index = label_space(taxonomy, manifest)
    train_ids = {e.video_id for e in manifest.entries if e.split == "train"}
    if not train_ids:
        raise ContractError("manifest has no train split")
    view = store.select(
        modality=filt, split_ids=train_ids, include_augmented=use_augmented
    )
    if len(view) == 0:
        raise ContractError("no training rows after filtering")
    config = ModelConfig(
        sources=store.sources_for(filt),
        num_classes=len(labels),
        d_model=d_model,
        num_heads=num_heads,
        fc_hidden=fc_hidden,
        dropout_rate=dropout_rate,
        attention_placement=parse_attention(attention),
        double_fc=double_fc,
        es_chunk_tokens=es_chunk_tokens,
        seed=init_seed,
    )
    model = init_model(config)
    cfg = train_cfg or TrainConfig()
    model, log = train(model, view, cfg, label_to_index=scene_to_index, progress=progress)

    test_accuracy = None
    if evaluate_test:
        has_test = any(
            e.split == "test" and store.get(e.video_id) is not None
            for e in manifest.entries
        )
        if has_test:
            test_accuracy = voted_accuracy(
                model, store, manifest, "test", filt, scene_to_index
            )
    return TrainResult(
        model=model,
        labels=labels,
        log=log,
        train_accuracy=log.epochs[-1].accuracy,
        test_accuracy=test_accuracy,
    )


def voted_accuracy(
    model: FusionModel,
    store: EmbeddingStore,
    manifest: Manifest,
    split: str,
    modality: str | None,
    scene_to_index: dict[str, int],
) -> float:
    """Video-level accuracy with majority voting over the split's videos."""
    total = 0
    correct = 0
    for e in manifest.entries:
        if e.split != split:
            continue
        record = store.get(e.video_id, augmented=False)
        if record is None:
            continue
        result = predict_video(model, record, store, modality)
        total += 1
        if result.voted_class == scene_to_index[e.scene]:
            correct += 1
    if total == 0:
        raise ContractError(f"no scorable videos in split {split!r}")
    return correct / total


@dataclass
class DetectionResult:
    run: DetectionRun
    report: EvalReport


def run_detection(
    vsc: Checkpoint,
    asc: Checkpoint,
    store: EmbeddingStore,
    plan: SwapPlan,
    comparison: str = "native",
) -> DetectionResult:
    """Detect per plan. comparison="3class" coarsens scene-level votes to
    indoor/outdoor/vehicle before comparing them."""
    if vsc.labels != asc.labels:
        raise ContractError(
            "visual and audio checkpoints were trained on different label lists"
        )
    if comparison == "native":
        run = detect_batch(vsc.model, asc.model, store, plan, vsc.labels)
    elif comparison == THREE_CLASS:
        taxonomy = Taxonomy(kind=THREE_CLASS)
        coarse_index = {c: i for i, c in enumerate(COARSE_CLASSES)}
        if set(vsc.labels) <= set(COARSE_CLASSES):
            raise ContractError(
                "checkpoints already predict coarse classes; use native comparison"
            )
        remap = [coarse_index[coarsen(label, taxonomy)] for label in vsc.labels]
        run = detect_batch(
            vsc.model, asc.model, store, plan, list(COARSE_CLASSES),
            vote_remap=remap,
        )
    else:
        raise ContractError(
            f"unknown comparison {comparison!r}; expected native or {THREE_CLASS}"
        )
    if not run.verdicts:
        raise ContractError("no verdicts produced; is the store empty?")
    report = score_detection(run.verdicts)
    return DetectionResult(run=run, report=report)


ATTENTION_ROWS = (
    # label, attention, use augmented records, double fc
    ("proposed", "ls", True, True),
    ("es", "es", True, True),
    ("ms", "ms", True, True),
    ("ns", "ns", True, True),
    ("es+ls", "es+ls", True, True),
    ("ms+ls", "ms+ls", True, True),
    ("es+ms", "es+ms", True, True),
    ("es+ms+ls", "es+ms+ls", True, True),
)

ABLATION_GRIDS = {
    "full": ATTENTION_ROWS + (
        ("no_augmentation", "ls", False, True),
        ("single_fc", "ls", True, False),
    ),
    "attention": ATTENTION_ROWS,
}


@dataclass
class AblationRow:
    label: str
    attention: str
    augmented: bool
    fc_layers: int
    epoch1_loss: float
    final_loss: float
    train_accuracy: float
    test_accuracy: float


def run_ablation(
    store: EmbeddingStore,
    manifest: Manifest,
    modality: str = "av",
    taxonomy: str = TEN_CLASS,
    grid: str = "full",
    d_model: int = 256,
    num_heads: int = 4,
    fc_hidden: int = 512,
    dropout_rate: float = 0.3,
    es_chunk_tokens: int = 4,
    init_seed: int = 0,
    train_cfg: TrainConfig | None = None,
    progress=None,
) -> list[AblationRow]:
    """Train every design variant and report one comparison row each."""
    if grid not in ABLATION_GRIDS:
        raise ContractError(
            f"unknown grid {grid!r}; expected one of {sorted(ABLATION_GRIDS)}"
        )
    rows = []
    for label, attention, use_aug, double_fc in ABLATION_GRIDS[grid]:
        result = train_classifier(
            store,
            manifest,
            modality=modality,
            attention=attention,
            taxonomy=taxonomy,
            use_augmented=use_aug,
            double_fc=double_fc,
            d_model=d_model,
            num_heads=num_heads,
            fc_hidden=fc_hidden,
            dropout_rate=dropout_rate,
            es_chunk_tokens=es_chunk_tokens,
            init_seed=init_seed,
            train_cfg=train_cfg,
        )
        row = AblationRow(
            label=label,
            attention=attention_label(result.model.config.attention_placement),
            augmented=use_aug,
            fc_layers=2 if double_fc else 1,
            epoch1_loss=result.log.epochs[0].mean_loss,
            final_loss=result.log.epochs[-1].mean_loss,
            train_accuracy=result.train_accuracy,
            test_accuracy=result.test_accuracy,
        )
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


def ablation_csv(rows: list[AblationRow]) -> str:
    lines = [
        "label,attention,augmented,fc_layers,epoch1_loss,final_loss,"
        "train_accuracy,test_accuracy"
    ]
    for r in rows:
        lines.append(
            f"{r.label},{r.attention},{str(r.augmented).lower()},{r.fc_layers},"
            f"{r.epoch1_loss!r},{r.final_loss!r},{r.train_accuracy!r},{r.test_accuracy!r}"
        )
    return "\n".join(lines) + "\n"
