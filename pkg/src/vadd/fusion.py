"""Embedding-fusion scene classifier with configurable self-attention stages.

Every input source is projected to one d_model token. Optional stages then
refine the tokens: an early stage splits each source token into chunks and
attends within the source, a per-modality stage attends within the visual
and audio token groups, and a late stage attends over all tokens. Each
stage is one multi-head scaled dot-product attention block with a residual
connection. Tokens are concatenated and classified through one or two
fully connected layers (dropout between the two, inverted scaling so
inference needs no correction).

Forward and backward passes are written out explicitly in numpy; gradients
are the exact analytic derivatives of the mean cross-entropy, which keeps
them checkable against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, FormatError
from .store import SourceSpec, VISUAL, AUDIO

STAGES = ("ES", "MS", "LS")

ATTENTION_VARIANTS = {
    "ns": frozenset(),
    "es": frozenset({"ES"}),
    "ms": frozenset({"MS"}),
    "ls": frozenset({"LS"}),
    "es+ls": frozenset({"ES", "LS"}),
    "ms+ls": frozenset({"MS", "LS"}),
    "es+ms": frozenset({"ES", "MS"}),
    "es+ms+ls": frozenset({"ES", "MS", "LS"}),
}


def parse_attention(token: str) -> frozenset[str]:
    """Turn a flag like "es+ls" into a placement set; "ns" means none."""
    key = token.strip().lower()
    if key not in ATTENTION_VARIANTS:
        raise ContractError(
            f"unknown attention placement {token!r}; "
            f"expected one of {', '.join(sorted(ATTENTION_VARIANTS))}"
        )
    return ATTENTION_VARIANTS[key]


def attention_label(placement: frozenset[str]) -> str:
    if not placement:
        return "ns"
    return "+".join(s.lower() for s in STAGES if s in placement)


@dataclass(frozen=True)
class ModelConfig:
    sources: tuple[SourceSpec, ...]
    num_classes: int
    d_model: int = 256
    num_heads: int = 4
    fc_hidden: int = 512
    dropout_rate: float = 0.3
    attention_placement: frozenset[str] = frozenset({"LS"})
    double_fc: bool = True
    es_chunk_tokens: int = 4
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(
            self, "attention_placement", frozenset(self.attention_placement)
        )
        if not self.sources:
            raise ContractError("config needs at least one source")
        names = [s.name for s in self.sources]
        if len(set(names)) != len(names):
            raise ContractError("source names must be unique")
        if self.num_classes < 2:
            raise ContractError("num_classes must be at least 2")
        if self.d_model <= 0 or self.d_model % self.num_heads != 0:
            raise ContractError(
                f"d_model ({self.d_model}) must be a positive multiple of "
                f"num_heads ({self.num_heads})"
            )
        if self.es_chunk_tokens <= 0 or self.d_model % self.es_chunk_tokens != 0:
            raise ContractError(
                f"d_model ({self.d_model}) must be divisible by "
                f"es_chunk_tokens ({self.es_chunk_tokens})"
            )
        bad = self.attention_placement - set(STAGES)
        if bad:
            raise ContractError(f"unknown attention stages {sorted(bad)}")
        if "ES" in self.attention_placement:
            chunk_dim = self.d_model // self.es_chunk_tokens
            if chunk_dim % self.num_heads != 0:
                raise ContractError(
                    f"ES chunk dim ({chunk_dim}) must be divisible by "
                    f"num_heads ({self.num_heads})"
                )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractError("dropout_rate must lie in [0, 1)")
        if self.fc_hidden <= 0:
            raise ContractError("fc_hidden must be positive")

    @property
    def total_width(self) -> int:
        return sum(s.dim for s in self.sources)

    def to_dict(self) -> dict:
        return {
            "sources": [s.to_dict() for s in self.sources],
            "num_classes": self.num_classes,
            "d_model": self.d_model,
            "num_heads": self.num_heads,
            "fc_hidden": self.fc_hidden,
            "dropout_rate": self.dropout_rate,
            "attention_placement": [s for s in STAGES if s in self.attention_placement],
            "double_fc": self.double_fc,
            "es_chunk_tokens": self.es_chunk_tokens,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(
            sources=tuple(
                SourceSpec(s["name"], s["modality"], int(s["dim"]))
                for s in obj["sources"]
            ),
            num_classes=int(obj["num_classes"]),
            d_model=int(obj["d_model"]),
            num_heads=int(obj["num_heads"]),
            fc_hidden=int(obj["fc_hidden"]),
            dropout_rate=float(obj["dropout_rate"]),
            attention_placement=frozenset(obj["attention_placement"]),
            double_fc=bool(obj["double_fc"]),
            es_chunk_tokens=int(obj["es_chunk_tokens"]),
            seed=int(obj["seed"]),
        )


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter names and shapes, in serialization order."""
    d = config.d_model
    shapes: dict[str, tuple[int, ...]] = {}
    for s in config.sources:
        shapes[f"proj.{s.name}.w"] = (s.dim, d)
        shapes[f"proj.{s.name}.b"] = (d,)
    for stage in STAGES:
        if stage not in config.attention_placement:
            continue
        da = d // config.es_chunk_tokens if stage == "ES" else d
        prefix = f"attn.{stage.lower()}"
        for mat in ("wq", "wk", "wv", "wo"):
            shapes[f"{prefix}.{mat}"] = (da, da)
        for vec in ("bq", "bk", "bv", "bo"):
            shapes[f"{prefix}.{vec}"] = (da,)
    S = len(config.sources)
    if config.double_fc:
        shapes["fc1.w"] = (S * d, config.fc_hidden)
        shapes["fc1.b"] = (config.fc_hidden,)
        shapes["fc2.w"] = (config.fc_hidden, config.num_classes)
        shapes["fc2.b"] = (config.num_classes,)
    else:
        shapes["fc.w"] = (S * d, config.num_classes)
        shapes["fc.b"] = (config.num_classes,)
    return shapes


@dataclass
class FusionModel:
    config: ModelConfig
    params: dict[str, np.ndarray]

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def astype(self, dtype) -> "FusionModel":
        return FusionModel(
            self.config, {k: v.astype(dtype) for k, v in self.params.items()}
        )

    def copy(self) -> "FusionModel":
        return FusionModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def shape_audit(self) -> None:
        expected = parameter_shapes(self.config)
        if list(self.params) != list(expected):
            raise ContractError(
                f"parameter set mismatch: {sorted(set(self.params) ^ set(expected))}"
            )
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ContractError(
                    f"parameter {name}: shape {self.params[name].shape} != {shape}"
                )
            if not np.all(np.isfinite(self.params[name])):
                raise ContractError(f"parameter {name}: non-finite values")

    def modality_groups(self) -> list[list[int]]:
        groups = []
        for modality in (VISUAL, AUDIO):
            g = [i for i, s in enumerate(self.config.sources) if s.modality == modality]
            if g:
                groups.append(g)
        return groups


def init_model(config: ModelConfig, dtype=np.float32) -> FusionModel:
    """Seeded scaled-uniform weights (bound 1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(np.uint64(config.seed))
    params: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(config).items():
        if len(shape) == 1:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    model = FusionModel(config, params)
    model.shape_audit()
    return model


@dataclass
class ForwardTrace:
    """Single-row forward result plus everything backward needs."""

    logits: np.ndarray
    probabilities: np.ndarray
    attention: dict[str, np.ndarray]  # stage -> row-stochastic weights
    hidden: np.ndarray | None  # post-ReLU activations (double fc only)
    dropped_hidden: np.ndarray | None  # after the dropout mask
    cache: "_BatchCache"


@dataclass
class _BatchCache:
    X: np.ndarray
    tokens_in: dict[str, np.ndarray] = field(default_factory=dict)
    attn: dict = field(default_factory=dict)
    tokens: np.ndarray | None = None
    z: np.ndarray | None = None
    pre1: np.ndarray | None = None
    h: np.ndarray | None = None
    mask: np.ndarray | None = None
    hd: np.ndarray | None = None
    logits: np.ndarray | None = None
    probs: np.ndarray | None = None
    log_probs: np.ndarray | None = None


def _attn_forward(params: dict, prefix: str, X: np.ndarray, num_heads: int):
    """Multi-head scaled dot-product self-attention; returns X + block(X)."""
    N, T, da = X.shape
    dh = da // num_heads
    Q = X @ params[f"{prefix}.wq"] + params[f"{prefix}.bq"]
    K = X @ params[f"{prefix}.wk"] + params[f"{prefix}.bk"]
    V = X @ params[f"{prefix}.wv"] + params[f"{prefix}.bv"]
    Qh = Q.reshape(N, T, num_heads, dh).transpose(0, 2, 1, 3)
    Kh = K.reshape(N, T, num_heads, dh).transpose(0, 2, 1, 3)
    Vh = V.reshape(N, T, num_heads, dh).transpose(0, 2, 1, 3)
    scores = Qh @ Kh.transpose(0, 1, 3, 2) / np.sqrt(np.asarray(dh, dtype=X.dtype))
    scores -= scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    Oh = weights @ Vh
    Oc = Oh.transpose(0, 2, 1, 3).reshape(N, T, da)
    out = Oc @ params[f"{prefix}.wo"] + params[f"{prefix}.bo"]
    cache = (X, Qh, Kh, Vh, weights, Oc)
    return X + out, cache


def _attn_backward(
    params: dict, prefix: str, dY: np.ndarray, cache, num_heads: int, grads: dict
) -> np.ndarray:
    X, Qh, Kh, Vh, weights, Oc = cache
    N, T, da = X.shape
    dh = da // num_heads
    scale = np.sqrt(np.asarray(dh, dtype=X.dtype))

    grads[f"{prefix}.wo"] += np.einsum("ntd,nte->de", Oc, dY)
    grads[f"{prefix}.bo"] += dY.sum(axis=(0, 1))
    dOc = dY @ params[f"{prefix}.wo"].T
    dOh = dOc.reshape(N, T, num_heads, dh).transpose(0, 2, 1, 3)

    dW = dOh @ Vh.transpose(0, 1, 3, 2)
    dVh = weights.transpose(0, 1, 3, 2) @ dOh
    dS = weights * (dW - (dW * weights).sum(axis=-1, keepdims=True))
    dS /= scale
    dQh = dS @ Kh
    dKh = dS.transpose(0, 1, 3, 2) @ Qh

    dQ = dQh.transpose(0, 2, 1, 3).reshape(N, T, da)
    dK = dKh.transpose(0, 2, 1, 3).reshape(N, T, da)
    dV = dVh.transpose(0, 2, 1, 3).reshape(N, T, da)

    grads[f"{prefix}.wq"] += np.einsum("ntd,nte->de", X, dQ)
    grads[f"{prefix}.bq"] += dQ.sum(axis=(0, 1))
    grads[f"{prefix}.wk"] += np.einsum("ntd,nte->de", X, dK)
    grads[f"{prefix}.bk"] += dK.sum(axis=(0, 1))
    grads[f"{prefix}.wv"] += np.einsum("ntd,nte->de", X, dV)
    grads[f"{prefix}.bv"] += dV.sum(axis=(0, 1))

    # dY flows through the residual branch unchanged.
    return (
        dY
        + dQ @ params[f"{prefix}.wq"].T
        + dK @ params[f"{prefix}.wk"].T
        + dV @ params[f"{prefix}.wv"].T
    )


def _dropout_mask(shape, rate: float, dropout_seed: int, dtype) -> np.ndarray:
    rng = np.random.default_rng(np.uint64(dropout_seed))
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / np.dtype(dtype).type(1.0 - rate)


def forward_batch(
    model: FusionModel,
    X: np.ndarray,
    training_mode: bool = False,
    dropout_seed: int = 0,
) -> _BatchCache:
    cfg = model.config
    p = model.params
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != cfg.total_width:
        raise ContractError(
            f"input width {X.shape[-1] if X.ndim else '?'} != "
            f"expected {cfg.total_width}"
        )
    if not np.all(np.isfinite(X)):
        raise ContractError("non-finite input values")
    X = X.astype(model.dtype, copy=False)
    B = X.shape[0]
    S = len(cfg.sources)
    d = cfg.d_model

    cache = _BatchCache(X=X)
    tokens = np.empty((B, S, d), dtype=model.dtype)
    offset = 0
    for i, src in enumerate(cfg.sources):
        block = X[:, offset : offset + src.dim]
        tokens[:, i, :] = block @ p[f"proj.{src.name}.w"] + p[f"proj.{src.name}.b"]
        offset += src.dim

    if "ES" in cfg.attention_placement:
        C = cfg.es_chunk_tokens
        de = d // C
        cache.tokens_in["ES"] = tokens
        flat = tokens.reshape(B * S, C, de)
        out, attn_cache = _attn_forward(p, "attn.es", flat, cfg.num_heads)
        cache.attn["ES"] = attn_cache
        tokens = out.reshape(B, S, d)

    if "MS" in cfg.attention_placement:
        cache.tokens_in["MS"] = tokens
        new_tokens = tokens.copy()
        group_caches = []
        for group in model.modality_groups():
            out, attn_cache = _attn_forward(
                p, "attn.ms", tokens[:, group, :], cfg.num_heads
            )
            new_tokens[:, group, :] = out
            group_caches.append((group, attn_cache))
        cache.attn["MS"] = group_caches
        tokens = new_tokens

    if "LS" in cfg.attention_placement:
        cache.tokens_in["LS"] = tokens
        tokens, attn_cache = _attn_forward(p, "attn.ls", tokens, cfg.num_heads)
        cache.attn["LS"] = attn_cache

    cache.tokens = tokens
    z = tokens.reshape(B, S * d)
    cache.z = z

    if cfg.double_fc:
        pre1 = z @ p["fc1.w"] + p["fc1.b"]
        h = np.maximum(pre1, 0)
        if training_mode and cfg.dropout_rate > 0:
            mask = _dropout_mask(h.shape, cfg.dropout_rate, dropout_seed, model.dtype)
        else:
            mask = None
        hd = h * mask if mask is not None else h
        logits = hd @ p["fc2.w"] + p["fc2.b"]
        cache.pre1, cache.h, cache.mask, cache.hd = pre1, h, mask, hd
    else:
        logits = z @ p["fc.w"] + p["fc.b"]

    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    denom = exps.sum(axis=1, keepdims=True)
    cache.logits = logits
    cache.probs = exps / denom
    cache.log_probs = shifted - np.log(denom)
    return cache


def forward(
    model: FusionModel,
    row: np.ndarray,
    training_mode: bool = False,
    dropout_seed: int = 0,
) -> ForwardTrace:
    """Classify one concatenated embedding row."""
    row = np.asarray(row)
    if row.ndim != 1:
        raise ContractError("forward expects a single 1-D row")
    cache = forward_batch(model, row[None, :], training_mode, dropout_seed)
    attention: dict[str, np.ndarray] = {}
    for stage, entry in cache.attn.items():
        if stage == "MS":
            attention[stage] = [c[4][0] for _, c in entry]
        else:
            attention[stage] = entry[4][0] if stage == "LS" else entry[4]
    return ForwardTrace(
        logits=cache.logits[0],
        probabilities=cache.probs[0],
        attention=attention,
        hidden=None if cache.h is None else cache.h[0],
        dropped_hidden=None if cache.hd is None else cache.hd[0],
        cache=cache,
    )


def attention_weight_matrices(cache: _BatchCache) -> list[np.ndarray]:
    """All attention weight tensors of a forward pass (for invariant checks)."""
    mats = []
    for stage, entry in cache.attn.items():
        if stage == "MS":
            mats.extend(c[4] for _, c in entry)
        else:
            mats.append(entry[4])
    return mats


def zero_gradients(model: FusionModel) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in model.params.items()}


def loss_from_cache(cache: _BatchCache, labels: np.ndarray) -> float:
    return float(-cache.log_probs[np.arange(len(labels)), labels].mean())


def loss_and_gradients(
    model: FusionModel,
    X: np.ndarray,
    labels: Sequence[int],
    training_mode: bool = True,
    dropout_seed: int = 0,
):
    """Mean cross-entropy over the batch and its exact parameter gradients."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ContractError("empty batch")
    if labels.min() < 0 or labels.max() >= model.config.num_classes:
        raise ContractError("class index out of range")
    cache = forward_batch(model, X, training_mode, dropout_seed)
    loss = loss_from_cache(cache, labels)
    grads = backward_from_cache(model, cache, labels)
    return loss, grads


def backward_from_cache(
    model: FusionModel, cache: _BatchCache, labels: np.ndarray
) -> dict[str, np.ndarray]:
    cfg = model.config
    p = model.params
    B = cache.X.shape[0]
    S = len(cfg.sources)
    d = cfg.d_model
    grads = zero_gradients(model)

    dlogits = cache.probs.copy()
    dlogits[np.arange(B), labels] -= 1
    dlogits /= B

    if cfg.double_fc:
        grads["fc2.w"] += cache.hd.T @ dlogits
        grads["fc2.b"] += dlogits.sum(axis=0)
        dhd = dlogits @ p["fc2.w"].T
        dh = dhd * cache.mask if cache.mask is not None else dhd
        dpre1 = dh * (cache.pre1 > 0)
        grads["fc1.w"] += cache.z.T @ dpre1
        grads["fc1.b"] += dpre1.sum(axis=0)
        dz = dpre1 @ p["fc1.w"].T
    else:
        grads["fc.w"] += cache.z.T @ dlogits
        grads["fc.b"] += dlogits.sum(axis=0)
        dz = dlogits @ p["fc.w"].T

    dT = dz.reshape(B, S, d)

    if "LS" in cfg.attention_placement:
        dT = _attn_backward(p, "attn.ls", dT, cache.attn["LS"], cfg.num_heads, grads)

    if "MS" in cfg.attention_placement:
        dT_in = dT.copy()
        for group, attn_cache in cache.attn["MS"]:
            dT_in[:, group, :] = _attn_backward(
                p, "attn.ms", dT[:, group, :], attn_cache, cfg.num_heads, grads
            )
        dT = dT_in

    if "ES" in cfg.attention_placement:
        C = cfg.es_chunk_tokens
        de = d // C
        flat = dT.reshape(B * S, C, de)
        dflat = _attn_backward(p, "attn.es", flat, cache.attn["ES"], cfg.num_heads, grads)
        dT = dflat.reshape(B, S, d)

    offset = 0
    for i, src in enumerate(cfg.sources):
        block = cache.X[:, offset : offset + src.dim]
        grads[f"proj.{src.name}.w"] += block.T @ dT[:, i, :]
        grads[f"proj.{src.name}.b"] += dT[:, i, :].sum(axis=0)
        offset += src.dim
    return grads


def batch_loss(
    model: FusionModel,
    X: np.ndarray,
    labels: np.ndarray,
    training_mode: bool = True,
    dropout_seed: int = 0,
) -> float:
    """Loss only; used by the finite-difference oracle."""
    cache = forward_batch(model, X, training_mode, dropout_seed)
    return loss_from_cache(cache, labels)


def export_weights(model: FusionModel) -> str:
    """Canonical text form: 9-significant-digit floats, fixed ordering."""
    model.shape_audit()
    lines = ["fusionweights 1"]
    for name in parameter_shapes(model.config):
        arr = np.asarray(model.params[name], dtype=np.float32)
        lines.append(f"param {name} {' '.join(str(n) for n in arr.shape)}")
        rows = arr[None, :] if arr.ndim == 1 else arr
        for row in rows:
            lines.append(" ".join(format(float(v), ".8e") for v in row))
    return "\n".join(lines) + "\n"


def import_weights(config: ModelConfig, text: str) -> FusionModel:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "fusionweights 1":
        raise FormatError("unrecognized weight text header")
    expected = parameter_shapes(config)
    params: dict[str, np.ndarray] = {}
    pos = 1
    for name, shape in expected.items():
        if pos >= len(lines):
            raise FormatError(f"missing parameter {name}")
        head = lines[pos].split()
        if len(head) < 2 or head[0] != "param":
            raise FormatError(f"expected parameter header for {name}, got {lines[pos]!r}")
        if head[1] != name:
            raise FormatError(f"expected parameter {name}, found {head[1]!r}")
        declared = tuple(int(v) for v in head[2:])
        if declared != shape:
            raise FormatError(
                f"parameter {name}: declared shape {declared} does not match "
                f"config shape {shape}"
            )
        pos += 1
        nrows = shape[0] if len(shape) == 2 else 1
        ncols = shape[1] if len(shape) == 2 else shape[0]
        rows = []
        for _ in range(nrows):
            if pos >= len(lines):
                raise FormatError(f"parameter {name}: truncated values")
            tokens = lines[pos].split()
            if len(tokens) != ncols:
                raise FormatError(
                    f"parameter {name}: row has {len(tokens)} values, expected {ncols}"
                )
            try:
                rows.append(np.array(tokens, dtype=np.float32))
            except ValueError:
                raise FormatError(f"parameter {name}: unparseable value") from None
            pos += 1
        arr = np.stack(rows)
        params[name] = arr.reshape(shape)
    while pos < len(lines) and not lines[pos].strip():
        pos += 1
    if pos != len(lines):
        raise FormatError(f"unexpected trailing content at line {pos + 1}")
    model = FusionModel(config, params)
    model.shape_audit()
    return model
