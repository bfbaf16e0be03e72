"""The six embedding sources and their upstream model identities.

Declared dims are the nominal values for the pre-trained models; the
pipeline always records the dim actually produced at load time (the IOV
model in particular fixes its width only once loaded).
"""

from __future__ import annotations

from dataclasses import dataclass

VISUAL = "visual"
AUDIO = "audio"


@dataclass(frozen=True)
class ExtractorSpec:
    name: str
    modality: str
    nominal_dim: int
    model_id: str
    weights_tag: str


DEFAULT_SPECS = (
    ExtractorSpec("vit", VISUAL, 1000, "torchvision/vit_h_14",
                  "IMAGENET1K_SWAG_E2E_V1"),
    ExtractorSpec("clip", VISUAL, 1024, "open_clip/ViT-H-14",
                  "laion2b_s32b_b79k"),
    ExtractorSpec("resnet_places", VISUAL, 2048, "resnet50",
                  "places365"),
    ExtractorSpec("openl3", AUDIO, 512, "openl3/music",
                  "mel256-music-512"),
    ExtractorSpec("pann", AUDIO, 512, "panns/Wavegram-Logmel-CNN",
                  "audioset"),
    ExtractorSpec("iov", AUDIO, 128, "iov/CNN420",
                  "indoor-outdoor-vehicle"),
)

# OpenL3 produces this many frames per one-second window; they are
# averaged into the second's single vector.
OPENL3_FRAMES_PER_SECOND = 42
