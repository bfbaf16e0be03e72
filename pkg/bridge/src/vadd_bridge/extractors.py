"""Embedding extractors.

Two families share one interface: the pre-trained backends used for real
corpora (heavy deps and weights, constructed lazily with a clear error
when unavailable), and deterministic lite extractors that project simple
frame/spectrum statistics, used for development, format work and CI.

Visual extractors map a batch of RGB frames to one vector per frame.
Audio extractors map a one-second sample window to a (frames, dim) matrix;
the pipeline averages over the frame axis to get the second's vector, so
multi-frame sources (OpenL3 at 42 frames per second) and single-frame
sources (PANN at 1 Hz, IOV pooled) run through the same path.
"""

from __future__ import annotations

import hashlib

import cv2
import numpy as np

from .specs import AUDIO, OPENL3_FRAMES_PER_SECOND, VISUAL, ExtractorSpec


class ExtractorUnavailable(Exception):
    """The backend's package or weights are not installed."""


class VisualExtractor:
    spec: ExtractorSpec
    dim: int

    def embed_frames(self, frames: list[np.ndarray]) -> np.ndarray:
        raise NotImplementedError


class AudioExtractor:
    spec: ExtractorSpec
    dim: int

    def embed_window(self, window: np.ndarray, rate: int) -> np.ndarray:
        raise NotImplementedError


def _seeded_projection(name: str, in_dim: int, out_dim: int) -> np.ndarray:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.default_rng(np.uint64(seed))
    return (
        rng.normal(size=(in_dim, out_dim)) / np.sqrt(in_dim)
    ).astype(np.float32)


class LiteVisual(VisualExtractor):
    """Gray thumbnail statistics through a fixed seeded projection."""

    PATCH = 16

    def __init__(self, spec: ExtractorSpec):
        self.spec = spec
        self.dim = spec.nominal_dim
        self._projection = _seeded_projection(
            f"lite-visual:{spec.name}", self.PATCH * self.PATCH, self.dim
        )

    def embed_frames(self, frames: list[np.ndarray]) -> np.ndarray:
        out = np.empty((len(frames), self.dim), dtype=np.float32)
        for i, frame in enumerate(frames):
            gray = cv2.cvtColor(frame, cv2.COLOR_RGB2GRAY)
            small = cv2.resize(gray, (self.PATCH, self.PATCH),
                               interpolation=cv2.INTER_AREA)
            features = small.astype(np.float32).ravel() / 255.0
            out[i] = features @ self._projection
        return out


def _band_energies(window: np.ndarray, bands: int) -> np.ndarray:
    spectrum = np.abs(np.fft.rfft(window.astype(np.float64)))
    edges = np.linspace(0, len(spectrum), bands + 1, dtype=int)
    energies = np.array([
        spectrum[a:b].mean() if b > a else 0.0 for a, b in zip(edges, edges[1:])
    ])
    return np.log1p(energies).astype(np.float32)


class LiteAudio(AudioExtractor):
    """Log band energies through a fixed seeded projection.

    frames_per_window controls how many sub-frames one second produces
    before the pipeline's averaging step.
    """

    BANDS = 64

    def __init__(self, spec: ExtractorSpec, frames_per_window: int = 1):
        self.spec = spec
        self.dim = spec.nominal_dim
        self.frames_per_window = frames_per_window
        self._projection = _seeded_projection(
            f"lite-audio:{spec.name}", self.BANDS, self.dim
        )

    def embed_window(self, window: np.ndarray, rate: int) -> np.ndarray:
        n = self.frames_per_window
        hop = len(window) // n
        out = np.empty((n, self.dim), dtype=np.float32)
        for i in range(n):
            chunk = window[i * hop : (i + 1) * hop if i < n - 1 else len(window)]
            out[i] = _band_energies(chunk, self.BANDS) @ self._projection
        return out


class TorchvisionViT(VisualExtractor):
    """ViT-H/14 classifier activations (1000-dim head output)."""

    def __init__(self, spec: ExtractorSpec):
        self.spec = spec
        try:
            import torch
            from torchvision.models import ViT_H_14_Weights, vit_h_14
        except ImportError as exc:
            raise ExtractorUnavailable(f"torchvision not installed: {exc}") from None
        weights = ViT_H_14_Weights.IMAGENET1K_SWAG_E2E_V1
        self._torch = torch
        self._model = vit_h_14(weights=weights).eval()
        self._preprocess = weights.transforms()
        self.dim = 1000

    def embed_frames(self, frames):
        torch = self._torch
        with torch.no_grad():
            batch = torch.stack([
                self._preprocess(torch.from_numpy(f).permute(2, 0, 1))
                for f in frames
            ])
            return self._model(batch).numpy().astype(np.float32)


class OpenClipViT(VisualExtractor):
    """CLIP ViT-H/14 image encoder (1024-dim)."""

    def __init__(self, spec: ExtractorSpec):
        self.spec = spec
        try:
            import open_clip
            import torch
        except ImportError as exc:
            raise ExtractorUnavailable(f"open_clip not installed: {exc}") from None
        self._torch = torch
        model, _, preprocess = open_clip.create_model_and_transforms(
            "ViT-H-14", pretrained="laion2b_s32b_b79k"
        )
        self._model = model.eval()
        self._preprocess = preprocess
        self.dim = 1024

    def embed_frames(self, frames):
        from PIL import Image

        torch = self._torch
        with torch.no_grad():
            batch = torch.stack([
                self._preprocess(Image.fromarray(f)) for f in frames
            ])
            return self._model.encode_image(batch).numpy().astype(np.float32)


class Places365ResNet(VisualExtractor):
    """ResNet50 trained on Places365; penultimate (pooled) activations."""

    def __init__(self, spec: ExtractorSpec, weights_path: str | None = None):
        self.spec = spec
        try:
            import torch
            from torchvision.models import resnet50
        except ImportError as exc:
            raise ExtractorUnavailable(f"torchvision not installed: {exc}") from None
        if weights_path is None:
            raise ExtractorUnavailable(
                "resnet_places needs --places-weights (resnet50_places365 checkpoint)"
            )
        self._torch = torch
        model = resnet50(num_classes=365)
        checkpoint = torch.load(weights_path, map_location="cpu")
        state = checkpoint.get("state_dict", checkpoint)
        state = {k.replace("module.", ""): v for k, v in state.items()}
        model.load_state_dict(state)
        model.fc = torch.nn.Identity()
        self._model = model.eval()
        self.dim = 2048

    def embed_frames(self, frames):
        torch = self._torch
        with torch.no_grad():
            batch = torch.stack([
                torch.from_numpy(
                    cv2.resize(f, (224, 224)).astype(np.float32) / 255.0
                ).permute(2, 0, 1)
                for f in frames
            ])
            mean = torch.tensor([0.485, 0.456, 0.406]).view(3, 1, 1)
            std = torch.tensor([0.229, 0.224, 0.225]).view(3, 1, 1)
            batch = (batch - mean) / std
            return self._model(batch).numpy().astype(np.float32)


class OpenL3Audio(AudioExtractor):
    """OpenL3 music embeddings, 512-dim at ~42 frames per second."""

    def __init__(self, spec: ExtractorSpec):
        self.spec = spec
        try:
            import openl3
        except ImportError as exc:
            raise ExtractorUnavailable(f"openl3 not installed: {exc}") from None
        self._openl3 = openl3
        self._model = openl3.models.load_audio_embedding_model(
            input_repr="mel256", content_type="music", embedding_size=512
        )
        self.dim = 512

    def embed_window(self, window, rate):
        embeddings, _ = self._openl3.get_audio_embedding(
            window, rate, model=self._model,
            hop_size=1.0 / OPENL3_FRAMES_PER_SECOND, center=False, verbose=False,
        )
        return embeddings.astype(np.float32)


class PannAudio(AudioExtractor):
    """Wavegram-Logmel CNN tagging embeddings, one vector per second."""

    def __init__(self, spec: ExtractorSpec):
        self.spec = spec
        try:
            from panns_inference import AudioTagging
        except ImportError as exc:
            raise ExtractorUnavailable(
                f"panns_inference not installed: {exc}"
            ) from None
        self._tagger = AudioTagging(checkpoint_path=None, device="cpu")
        self.dim = None  # probed on first call

    def embed_window(self, window, rate):
        _, embedding = self._tagger.inference(window[None, :])
        embedding = np.asarray(embedding, dtype=np.float32)
        if self.dim is None:
            self.dim = embedding.shape[-1]
        return embedding.reshape(1, -1)


class IovAudio(AudioExtractor):
    """Indoor/outdoor/vehicle CNN; mean-pooled block output, dim probed."""

    def __init__(self, spec: ExtractorSpec, weights_path: str | None = None):
        self.spec = spec
        try:
            import torch
        except ImportError as exc:
            raise ExtractorUnavailable(f"torch not installed: {exc}") from None
        if weights_path is None:
            raise ExtractorUnavailable(
                "iov needs --iov-weights (torchscript CNN420 export)"
            )
        self._torch = torch
        self._model = torch.jit.load(weights_path, map_location="cpu").eval()
        self.dim = None  # probed on first call

    def embed_window(self, window, rate):
        torch = self._torch
        with torch.no_grad():
            out = self._model(torch.from_numpy(window[None, :]))
        embedding = out.numpy().astype(np.float32).reshape(1, -1)
        if self.dim is None:
            self.dim = embedding.shape[-1]
        return embedding


def build_extractors(
    specs, profile: str = "lite",
    places_weights: str | None = None, iov_weights: str | None = None,
) -> dict[str, VisualExtractor | AudioExtractor]:
    """Instantiate one extractor per spec for the chosen profile."""
    if profile not in ("lite", "full"):
        raise ValueError(f"unknown profile {profile!r}")
    extractors: dict[str, VisualExtractor | AudioExtractor] = {}
    for spec in specs:
        if profile == "lite":
            if spec.modality == VISUAL:
                extractors[spec.name] = LiteVisual(spec)
            else:
                frames = OPENL3_FRAMES_PER_SECOND if spec.name == "openl3" else 1
                extractors[spec.name] = LiteAudio(spec, frames_per_window=frames)
            continue
        if spec.name == "vit":
            extractors[spec.name] = TorchvisionViT(spec)
        elif spec.name == "clip":
            extractors[spec.name] = OpenClipViT(spec)
        elif spec.name == "resnet_places":
            extractors[spec.name] = Places365ResNet(spec, places_weights)
        elif spec.name == "openl3":
            extractors[spec.name] = OpenL3Audio(spec)
        elif spec.name == "pann":
            extractors[spec.name] = PannAudio(spec)
        elif spec.name == "iov":
            extractors[spec.name] = IovAudio(spec, iov_weights)
        else:
            raise ValueError(f"no full-profile backend for source {spec.name!r}")
    return extractors
