"""Mini-batch SGD training with a linear learning-rate ramp and checkpoints.

The learning rate starts at lr_start, falls linearly to lr_end by
lr_end_epoch and stays there. Rows are shuffled each epoch under a fixed
seed; the final partial batch is kept. Checkpoints bundle the canonical
weight text with the model and training configs, the label ordering and
the epoch number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError, TrainingDiverged
from .fusion import (
    FusionModel,
    ModelConfig,
    backward_from_cache,
    export_weights,
    forward_batch,
    import_weights,
    loss_from_cache,
)

CHECKPOINT_HEADER = "vadd-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 20
    lr_start: float = 0.001
    lr_end: float = 0.00001
    lr_end_epoch: int = 19
    momentum: float = 0.0
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ContractError("epochs must be at least 1")
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise ContractError("learning rates must be positive")
        if self.lr_end > self.lr_start:
            raise ContractError("lr_end must not exceed lr_start")
        if not 1 <= self.lr_end_epoch <= self.epochs:
            raise ContractError("lr_end_epoch must lie within [1, epochs]")
        if self.momentum < 0:
            raise ContractError("momentum must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "lr_start": self.lr_start,
            "lr_end": self.lr_end,
            "lr_end_epoch": self.lr_end_epoch,
            "momentum": self.momentum,
            "shuffle_seed": self.shuffle_seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)


def learning_rate(epoch: int, cfg: TrainConfig) -> float:
    """Closed-form schedule value for a 1-indexed epoch."""
    if not 1 <= epoch <= cfg.epochs:
        raise ContractError(f"epoch {epoch} outside [1, {cfg.epochs}]")
    if epoch >= cfg.lr_end_epoch:
        return cfg.lr_end
    return cfg.lr_start + (epoch - 1) * (cfg.lr_end - cfg.lr_start) / (
        cfg.lr_end_epoch - 1
    )


@dataclass
class EpochStats:
    epoch: int
    lr: float
    mean_loss: float
    accuracy: float


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,lr,loss,accuracy"]
        for e in self.epochs:
            lines.append(f"{e.epoch},{e.lr!r},{e.mean_loss!r},{e.accuracy!r}")
        return "\n".join(lines) + "\n"


def _dropout_seed_for(shuffle_seed: int, epoch: int, batch: int) -> int:
    seq = np.random.SeedSequence([int(shuffle_seed), epoch, batch])
    return int(seq.generate_state(1, np.uint64)[0])


def train(
    model: FusionModel,
    data,
    cfg: TrainConfig,
    label_to_index: dict[str, int] | None = None,
    progress=None,
) -> tuple[FusionModel, TrainLog]:
    """Run SGD over per-second rows; updates the model in place.

    `data` is either an (X, y) pair or a dataset view exposing
    to_arrays(label_to_index).
    """
    if isinstance(data, tuple):
        X, y = data
    else:
        if label_to_index is None:
            raise ContractError("label_to_index required when passing a view")
        X, y, _ = data.to_arrays(label_to_index)
    X = np.asarray(X, dtype=model.dtype)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if n == 0:
        raise ContractError("empty training data")
    if y.min() < 0 or y.max() >= model.config.num_classes:
        raise ContractError("label index out of range")

    rng = np.random.default_rng(np.uint64(cfg.shuffle_seed))
    velocity = (
        {k: np.zeros_like(v) for k, v in model.params.items()}
        if cfg.momentum > 0
        else None
    )
    log = TrainLog()
    for epoch in range(1, cfg.epochs + 1):
        lr = learning_rate(epoch, cfg)
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            cache = forward_batch(
                model, xb, training_mode=True,
                dropout_seed=_dropout_seed_for(cfg.shuffle_seed, epoch, b),
            )
            loss = loss_from_cache(cache, yb)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, b)
            grads = backward_from_cache(model, cache, yb)
            total_loss += loss * len(idx)
            correct += int((cache.probs.argmax(axis=1) == yb).sum())
            if velocity is not None:
                for k, g in grads.items():
                    velocity[k] = cfg.momentum * velocity[k] + g
                    model.params[k] -= model.dtype.type(lr) * velocity[k]
            else:
                for k, g in grads.items():
                    model.params[k] -= model.dtype.type(lr) * g
        stats = EpochStats(epoch, lr, total_loss / n, correct / n)
        log.epochs.append(stats)
        if progress is not None:
            progress(stats)
    return model, log


def save_checkpoint(
    path: str | Path,
    model: FusionModel,
    train_cfg: TrainConfig,
    epoch: int,
    labels: list[str],
) -> None:
    header = {
        "format": CHECKPOINT_HEADER,
        "version": CHECKPOINT_VERSION,
        "epoch": int(epoch),
        "labels": list(labels),
        "model_config": model.config.to_dict(),
        "train_config": train_cfg.to_dict(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(header, separators=(",", ":")) + "\n")
        f.write(export_weights(model))


@dataclass
class Checkpoint:
    model: FusionModel
    train_config: TrainConfig
    epoch: int
    labels: list[str]


def load_checkpoint(
    path: str | Path, expected_num_classes: int | None = None
) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
        rest = f.read()
    try:
        header = json.loads(first)
    except json.JSONDecodeError as exc:
        raise FormatError(f"corrupt checkpoint header: {exc.msg}") from None
    if header.get("format") != CHECKPOINT_HEADER:
        raise FormatError("not a checkpoint file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {header.get('version')!r}")
    config = ModelConfig.from_dict(header["model_config"])
    if expected_num_classes is not None and config.num_classes != expected_num_classes:
        raise FormatError(
            f"checkpoint has {config.num_classes} classes, expected "
            f"{expected_num_classes}"
        )
    labels = list(header["labels"])
    if len(labels) != config.num_classes:
        raise FormatError("label list length does not match num_classes")
    model = import_weights(config, rest)
    return Checkpoint(
        model=model,
        train_config=TrainConfig.from_dict(header["train_config"]),
        epoch=int(header["epoch"]),
        labels=labels,
    )
