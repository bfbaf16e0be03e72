"""Scene taxonomy, video manifests and the audio-swap plan procedure.

A manifest catalogs videos with their scene label and train/test split.
From a manifest's items, a swap plan partitions videos into an
"unmodified" set and cross-class pairs whose audio streams are to be
mutually exchanged, producing the manipulated half of a discrepancy
benchmark. Plans are serialized line-by-line with a fixed field order so
the same plan always produces identical bytes.
"""

from __future__ import annotations

import heapq
import json
import math
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ContractError, ParseError, ProtocolError, ValidationError

SCENE_CLASSES = (
    "airport",
    "bus",
    "metro",
    "metro_station",
    "park",
    "public_square",
    "shopping_mall",
    "street_pedestrian",
    "street_traffic",
    "tram",
)

COARSE_CLASSES = ("indoor", "outdoor", "vehicle")

# Coarse grouping following the low-complexity classification convention.
DEFAULT_THREE_CLASS_MAP = {
    "airport": "indoor",
    "metro_station": "indoor",
    "shopping_mall": "indoor",
    "park": "outdoor",
    "public_square": "outdoor",
    "street_pedestrian": "outdoor",
    "street_traffic": "outdoor",
    "bus": "vehicle",
    "metro": "vehicle",
    "tram": "vehicle",
}

TEN_CLASS = "10class"
THREE_CLASS = "3class"


@dataclass(frozen=True)
class Taxonomy:
    """Label space selector: the native ten classes or their coarse grouping."""

    kind: str = TEN_CLASS
    mapping: dict[str, str] | None = None

    def __post_init__(self):
        if self.kind not in (TEN_CLASS, THREE_CLASS):
            raise ContractError(f"unknown taxonomy kind {self.kind!r}")
        if self.kind == THREE_CLASS:
            mapping = self.mapping or DEFAULT_THREE_CLASS_MAP
            missing = [s for s in SCENE_CLASSES if s not in mapping]
            if missing:
                raise ContractError(f"3-class mapping misses scenes: {missing}")
            if set(mapping.values()) != set(COARSE_CLASSES):
                raise ContractError(
                    "3-class mapping must be onto {indoor, outdoor, vehicle}"
                )
            object.__setattr__(self, "mapping", dict(mapping))


def coarsen(scene: str, taxonomy: Taxonomy) -> str:
    """Map a scene to its coarse class. Only valid for a 3-class taxonomy."""
    if taxonomy.kind != THREE_CLASS:
        raise ContractError("coarsen requires a 3-class taxonomy")
    try:
        return taxonomy.mapping[scene]
    except KeyError:
        raise ContractError(f"scene {scene!r} not covered by the mapping") from None


@dataclass(frozen=True)
class VideoEntry:
    video_id: str
    scene: str
    duration_s: float = 10.0
    split: str = "test"

    def __post_init__(self):
        if not self.video_id:
            raise ValidationError("empty video_id")
        if self.duration_s <= 0:
            raise ValidationError(f"{self.video_id}: duration_s must be > 0")
        if self.split not in ("train", "test"):
            raise ValidationError(f"{self.video_id}: bad split {self.split!r}")


def _canonical_entry_line(e: VideoEntry) -> str:
    obj = {
        "video_id": e.video_id,
        "class": e.scene,
        "duration_s": float(e.duration_s),
        "split": e.split,
    }
    return json.dumps(obj, separators=(",", ":"))


class Manifest:
    """Ordered catalog of videos; video_ids are unique.

    Scene names are not restricted here so synthetic corpora with other
    label sets can be represented; the file loader enforces the closed
    ten-class set at the boundary.
    """

    def __init__(self, entries: Iterable[VideoEntry]):
        self.entries: list[VideoEntry] = list(entries)
        seen: set[str] = set()
        for e in self.entries:
            if e.video_id in seen:
                raise ValidationError(f"duplicate video_id {e.video_id!r}")
            seen.add(e.video_id)
        self._by_id = {e.video_id: e for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def get(self, video_id: str) -> VideoEntry | None:
        return self._by_id.get(video_id)

    def scene_of(self, video_id: str) -> str:
        return self._by_id[video_id].scene

    def classes(self) -> list[str]:
        return sorted({e.scene for e in self.entries})

    def subset(self, split: str) -> "Manifest":
        return Manifest(e for e in self.entries if e.split == split)

    @property
    def checksum(self) -> str:
        h = hashlib.sha256()
        for e in self.entries:
            h.update(_canonical_entry_line(e).encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for e in self.entries:
                f.write(_canonical_entry_line(e) + "\n")


def load_manifest(path: str | Path) -> Manifest:
    """Parse a line-delimited manifest file, enforcing the closed scene set."""
    entries = []
    ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line=lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", line=lineno)
            for key in ("video_id", "class", "split"):
                if key not in obj:
                    raise ParseError(f"missing field {key!r}", line=lineno)
            scene = obj["class"]
            if scene not in SCENE_CLASSES:
                raise ValidationError(
                    f"line {lineno}: unknown scene {scene!r} "
                    f"(expected one of {', '.join(SCENE_CLASSES)})"
                )
            vid = obj["video_id"]
            if vid in ids:
                raise ValidationError(f"line {lineno}: duplicate video_id {vid!r}")
            ids.add(vid)
            entries.append(
                VideoEntry(
                    video_id=vid,
                    scene=scene,
                    duration_s=float(obj.get("duration_s", 10)),
                    split=obj["split"],
                )
            )
    return Manifest(entries)


@dataclass
class SwapPlan:
    """Output of the swap procedure over one manifest."""

    seed: int
    source_checksum: str
    unmodified: list[str]
    swaps: list[tuple[str, str]]
    taxonomy: str = TEN_CLASS

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.serialize())

    def serialize(self) -> str:
        header = {
            "kind": "header",
            "seed": int(self.seed),
            "source_checksum": self.source_checksum,
            "taxonomy": self.taxonomy,
        }
        lines = [json.dumps(header, separators=(",", ":"))]
        for vid in self.unmodified:
            lines.append(
                json.dumps({"kind": "unmodified", "video_id": vid}, separators=(",", ":"))
            )
        for a, b in self.swaps:
            lines.append(
                json.dumps(
                    {"kind": "swap", "video_a": a, "video_b": b},
                    separators=(",", ":"),
                )
            )
        return "\n".join(lines) + "\n"


def load_swap_plan(path: str | Path) -> SwapPlan:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError("empty plan file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", line=1) from None
    if header.get("kind") != "header":
        raise ParseError("first line must be the header object", line=1)
    for key in ("seed", "source_checksum"):
        if key not in header:
            raise ParseError(f"header misses field {key!r}", line=1)
    unmodified: list[str] = []
    swaps: list[tuple[str, str]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", line=lineno) from None
        kind = obj.get("kind")
        if kind == "unmodified":
            unmodified.append(obj["video_id"])
        elif kind == "swap":
            swaps.append((obj["video_a"], obj["video_b"]))
        else:
            raise ParseError(f"unknown record kind {kind!r}", line=lineno)
    return SwapPlan(
        seed=int(header["seed"]),
        source_checksum=header["source_checksum"],
        unmodified=unmodified,
        swaps=swaps,
        taxonomy=header.get("taxonomy", TEN_CLASS),
    )


def generate_swap_plan(manifest: Manifest, seed: int) -> SwapPlan:
    """Split each class in half, then pair off bucket items across classes.

    Half of each class (rounded up) stays unmodified; the rest enter a
    bucket. Items are then drawn from the bucket two at a time, always
    from the two classes with the most items remaining (ties broken by
    class name), with the concrete item chosen uniformly at random. This
    keeps the per-class pair counts a pure function of the bucket sizes
    while the item identities stay seed-dependent. Whatever cannot be
    paired across classes returns to the unmodified set.
    """
    by_class: dict[str, list[str]] = {}
    for e in manifest.entries:
        by_class.setdefault(e.scene, []).append(e.video_id)
    if len(by_class) < 2:
        raise ProtocolError(
            "cannot form cross-class swaps: manifest has fewer than 2 classes"
        )

    rng = np.random.default_rng(np.uint64(seed))
    unmodified: list[str] = []
    bucket: dict[str, list[str]] = {}
    for scene in sorted(by_class):
        items = by_class[scene]
        n = len(items)
        keep = math.ceil(n / 2)
        perm = rng.permutation(n)
        unmodified.extend(items[i] for i in perm[:keep])
        bucket[scene] = [items[i] for i in perm[keep:]]

    # Max-heap on remaining count; name breaks ties deterministically.
    heap = [(-len(v), scene) for scene, v in bucket.items() if v]
    heapq.heapify(heap)
    swaps: list[tuple[str, str]] = []
    while len(heap) >= 2:
        n1, c1 = heapq.heappop(heap)
        n2, c2 = heapq.heappop(heap)
        a = bucket[c1].pop(int(rng.integers(len(bucket[c1]))))
        b = bucket[c2].pop(int(rng.integers(len(bucket[c2]))))
        swaps.append((a, b))
        if bucket[c1]:
            heapq.heappush(heap, (n1 + 1, c1))
        if bucket[c2]:
            heapq.heappush(heap, (n2 + 1, c2))
    for scene in sorted(bucket):
        unmodified.extend(bucket[scene])

    index = {e.video_id: i for i, e in enumerate(manifest.entries)}
    unmodified.sort(key=index.__getitem__)
    return SwapPlan(
        seed=int(seed),
        source_checksum=manifest.checksum,
        unmodified=unmodified,
        swaps=swaps,
    )


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def add(self, kind: str, message: str) -> None:
        self.violations.append(Violation(kind, message))

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "violations": [
                {"kind": v.kind, "message": v.message} for v in self.violations
            ],
        }


def validate_swap_plan(plan: SwapPlan, manifest: Manifest) -> ValidationReport:
    """Check every plan invariant against a manifest; violations are data."""
    report = ValidationReport()
    if plan.source_checksum != manifest.checksum:
        report.add(
            "checksum",
            f"plan source_checksum {plan.source_checksum[:12]}... does not match "
            f"manifest {manifest.checksum[:12]}...",
        )

    test_ids = {e.video_id for e in manifest.entries if e.split == "test"}
    counts: dict[str, int] = {}
    for vid in plan.unmodified:
        counts[vid] = counts.get(vid, 0) + 1
    swap_membership: dict[str, int] = {}
    for a, b in plan.swaps:
        counts[a] = counts.get(a, 0) + 1
        counts[b] = counts.get(b, 0) + 1
        for vid in (a, b):
            swap_membership[vid] = swap_membership.get(vid, 0) + 1
        ea, eb = manifest.get(a), manifest.get(b)
        if ea is not None and eb is not None and ea.scene == eb.scene:
            report.add(
                "same_class_swap",
                f"swap pair ({a!r}, {b!r}) joins two {ea.scene!r} videos",
            )

    for vid, n in swap_membership.items():
        if n > 1:
            report.add("repeated_in_swaps", f"{vid!r} appears in {n} swap pairs")

    for vid, n in counts.items():
        if vid not in test_ids:
            report.add("unknown_video", f"{vid!r} not among the manifest's test items")
        elif n > 1:
            report.add("duplicate_coverage", f"{vid!r} covered {n} times")
    for vid in sorted(test_ids - set(counts)):
        report.add("missing_coverage", f"{vid!r} not covered by the plan")
    return report


@dataclass(frozen=True)
class ClassSummary:
    scene: str
    total: int
    unmodified: int
    manipulated: int


def summarize_plan(plan: SwapPlan, manifest: Manifest) -> list[ClassSummary]:
    """Per-class unmodified/manipulated counts, ordered by class name."""
    totals: dict[str, int] = {}
    for e in manifest.entries:
        totals[e.scene] = totals.get(e.scene, 0) + 1
    unmod: dict[str, int] = {scene: 0 for scene in totals}
    manip: dict[str, int] = {scene: 0 for scene in totals}
    for vid in plan.unmodified:
        unmod[manifest.scene_of(vid)] += 1
    for a, b in plan.swaps:
        manip[manifest.scene_of(a)] += 1
        manip[manifest.scene_of(b)] += 1
    return [
        ClassSummary(scene, totals[scene], unmod[scene], manip[scene])
        for scene in sorted(totals)
    ]
