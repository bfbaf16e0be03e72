"""Scoring: accuracy, confusion matrices, detection precision/recall/F1.

Detection scoring treats "manipulated" as the positive class. Degenerate
denominators (no predicted or no true positives) score 0 and raise a flag
in the report instead of being undefined.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ContractError

REPORT_VERSION = 1

DETECTION_CLASSES = ("unmodified", "manipulated")


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]  # [true][predicted]

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "counts": [list(row) for row in self.counts],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ConfusionMatrix":
        return cls(
            classes=tuple(obj["classes"]),
            counts=tuple(tuple(int(v) for v in row) for row in obj["counts"]),
        )

    def to_csv(self) -> str:
        lines = ["true\\predicted," + ",".join(self.classes)]
        for label, row in zip(self.classes, self.counts):
            lines.append(label + "," + ",".join(str(v) for v in row))
        return "\n".join(lines) + "\n"


def confusion_matrix(
    pairs: Sequence[tuple[str, str]], classes: Sequence[str]
) -> ConfusionMatrix:
    index = {c: i for i, c in enumerate(classes)}
    counts = [[0] * len(classes) for _ in classes]
    for true, pred in pairs:
        counts[index[true]][index[pred]] += 1
    return ConfusionMatrix(tuple(classes), tuple(tuple(row) for row in counts))


def score_classification(
    pairs: Sequence[tuple[str, str]], classes: Sequence[str] | None = None
) -> tuple[float, ConfusionMatrix]:
    """Accuracy and confusion matrix over (true, predicted) label pairs."""
    if not pairs:
        raise ContractError("no predictions to score")
    if classes is None:
        classes = sorted({t for t, _ in pairs} | {p for _, p in pairs})
    else:
        known = set(classes)
        for t, p in pairs:
            if t not in known or p not in known:
                raise ContractError(f"label outside the class set: ({t!r}, {p!r})")
    correct = sum(1 for t, p in pairs if t == p)
    return correct / len(pairs), confusion_matrix(pairs, classes)


@dataclass
class EvalReport:
    accuracy: float
    per_class: dict[str, dict[str, float]]
    detection_precision: float
    detection_recall: float
    detection_f1: float
    degenerate_precision: bool
    degenerate_recall: bool
    macro_precision: float
    macro_recall: float
    confusion: ConfusionMatrix
    item_count: int
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "accuracy": self.accuracy,
            "per_class": self.per_class,
            "detection": {
                "precision": self.detection_precision,
                "recall": self.detection_recall,
                "f1": self.detection_f1,
                "degenerate_precision": self.degenerate_precision,
                "degenerate_recall": self.degenerate_recall,
            },
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
            },
            "confusion": self.confusion.to_dict(),
            "item_count": self.item_count,
            "flags": self.flags,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EvalReport":
        if obj.get("version") != REPORT_VERSION:
            raise ContractError(f"unsupported report version {obj.get('version')!r}")
        det = obj["detection"]
        return cls(
            accuracy=obj["accuracy"],
            per_class=obj["per_class"],
            detection_precision=det["precision"],
            detection_recall=det["recall"],
            detection_f1=det["f1"],
            degenerate_precision=det["degenerate_precision"],
            degenerate_recall=det["degenerate_recall"],
            macro_precision=obj["macro"]["precision"],
            macro_recall=obj["macro"]["recall"],
            confusion=ConfusionMatrix.from_dict(obj["confusion"]),
            item_count=obj["item_count"],
            flags=list(obj["flags"]),
        )


def _precision_recall(tp: int, fp: int, fn: int) -> tuple[float, float, bool, bool]:
    degenerate_p = (tp + fp) == 0
    degenerate_r = (tp + fn) == 0
    precision = 0.0 if degenerate_p else tp / (tp + fp)
    recall = 0.0 if degenerate_r else tp / (tp + fn)
    return precision, recall, degenerate_p, degenerate_r


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def score_detection(items: Iterable) -> EvalReport:
    """Score predicted-vs-true manipulation flags.

    Accepts anything with `manipulated` and `ground_truth_manipulated`
    attributes, or plain (predicted, truth) boolean pairs.
    """
    pairs: list[tuple[bool, bool]] = []
    for item in items:
        if hasattr(item, "manipulated"):
            truth = item.ground_truth_manipulated
            if truth is None:
                raise ContractError(
                    f"verdict for {item.video_id!r} carries no ground truth"
                )
            pairs.append((bool(item.manipulated), bool(truth)))
        else:
            pred, truth = item
            pairs.append((bool(pred), bool(truth)))
    if not pairs:
        raise ContractError("no verdicts to score")

    tp = sum(1 for p, t in pairs if p and t)
    fp = sum(1 for p, t in pairs if p and not t)
    fn = sum(1 for p, t in pairs if not p and t)
    tn = sum(1 for p, t in pairs if not p and not t)

    precision, recall, deg_p, deg_r = _precision_recall(tp, fp, fn)
    # Negative-class stats mirror the positive ones for the macro average.
    n_precision, n_recall, n_deg_p, _ = _precision_recall(tn, fn, fp)

    label_pairs = [
        (DETECTION_CLASSES[t], DETECTION_CLASSES[p]) for p, t in pairs
    ]
    cm = confusion_matrix(label_pairs, DETECTION_CLASSES)

    flags = []
    if deg_p:
        flags.append("no predicted positives; precision reported as 0")
    if deg_r:
        flags.append("no true positives; recall reported as 0")

    return EvalReport(
        accuracy=(tp + tn) / len(pairs),
        per_class={
            "unmodified": {"precision": n_precision, "recall": n_recall},
            "manipulated": {"precision": precision, "recall": recall},
        },
        detection_precision=precision,
        detection_recall=recall,
        detection_f1=f1_score(precision, recall),
        degenerate_precision=deg_p,
        degenerate_recall=deg_r,
        macro_precision=(precision + n_precision) / 2,
        macro_recall=(recall + n_recall) / 2,
        confusion=cm,
        item_count=len(pairs),
        flags=flags,
    )


def render_report(report: EvalReport, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        return report.confusion.to_csv()
    if fmt == "text":
        lines = [
            f"items: {report.item_count}",
            f"accuracy: {report.accuracy:.4f}",
            (
                f"detection (positive = manipulated): "
                f"P={report.detection_precision:.4f} "
                f"R={report.detection_recall:.4f} "
                f"F1={report.detection_f1:.4f}"
            ),
            f"macro: P={report.macro_precision:.4f} R={report.macro_recall:.4f}",
            "confusion (true x predicted):",
        ]
        header = "    " + " ".join(f"{c:>12}" for c in report.confusion.classes)
        lines.append(header)
        for label, row in zip(report.confusion.classes, report.confusion.counts):
            lines.append(
                f"    {label:>12} " + " ".join(f"{v:>12}" for v in row)
            )
        for flag in report.flags:
            lines.append(f"note: {flag}")
        return "\n".join(lines) + "\n"
    raise ContractError(f"unknown report format {fmt!r}")


def parse_report(text: str) -> EvalReport:
    return EvalReport.from_dict(json.loads(text))
