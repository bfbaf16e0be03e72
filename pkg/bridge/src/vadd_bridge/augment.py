"""Seeded image-space augmentation applied before visual extraction.

One parameter draw per video, applied to all its frames: horizontal flip
with probability flip_prob, brightness and contrast factors within
1 +/- strength, rotation within +/- max degrees. Audio is never touched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageEnhance


@dataclass(frozen=True)
class AugmentConfig:
    flip_prob: float = 0.5
    brightness: float = 0.2
    contrast: float = 0.2
    rotation_deg: float = 10.0

    @property
    def is_identity(self) -> bool:
        return (
            self.flip_prob == 0
            and self.brightness == 0
            and self.contrast == 0
            and self.rotation_deg == 0
        )


@dataclass(frozen=True)
class AugmentParams:
    flip: bool
    brightness: float
    contrast: float
    rotation: float


def draw_params(config: AugmentConfig, seed: int) -> AugmentParams:
    rng = np.random.default_rng(np.uint64(seed))
    return AugmentParams(
        flip=bool(rng.random() < config.flip_prob),
        brightness=float(1.0 + rng.uniform(-config.brightness, config.brightness)),
        contrast=float(1.0 + rng.uniform(-config.contrast, config.contrast)),
        rotation=float(rng.uniform(-config.rotation_deg, config.rotation_deg)),
    )


def apply_params(frame: np.ndarray, params: AugmentParams) -> np.ndarray:
    image = Image.fromarray(frame)
    if params.flip:
        image = image.transpose(Image.FLIP_LEFT_RIGHT)
    if params.brightness != 1.0:
        image = ImageEnhance.Brightness(image).enhance(params.brightness)
    if params.contrast != 1.0:
        image = ImageEnhance.Contrast(image).enhance(params.contrast)
    if params.rotation != 0.0:
        image = image.rotate(params.rotation, resample=Image.BILINEAR)
    return np.asarray(image)


def augment_frames(
    frames: list[np.ndarray], config: AugmentConfig, seed: int
) -> list[np.ndarray]:
    if config.is_identity:
        return list(frames)
    params = draw_params(config, seed)
    return [apply_params(frame, params) for frame in frames]
