"""Confusion-matrix segmentation metrics: per-class IoU, mIoU, foreground IoU.

Rows are ground truth, columns are prediction, counts are 64-bit (a single
10k x 10k raster already overflows 32-bit accumulation across a dataset).
Pixels whose truth is the ignore value never count; pixels whose prediction
is ignore are skipped and tallied separately. Classes absent from both
truth and prediction (zero union) report an undefined IoU and are excluded
from the mean, the standard convention for per-tile evaluation where most
of the vocabulary is absent.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .interchange import IGNORE_INDEX, ClassTable, LabelMap

log = logging.getLogger(__name__)


@dataclass
class ConfusionMatrix:
    size: int
    counts: np.ndarray = field(default=None)  # type: ignore[assignment]
    predicted_ignore: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise ValidationError(f"confusion matrix needs >= 1 class, got {self.size}")
        if self.counts is None:
            self.counts = np.zeros((self.size, self.size), dtype=np.uint64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.uint64)
            if self.counts.shape != (self.size, self.size):
                raise ValidationError(
                    f"counts shape {self.counts.shape} != ({self.size}, {self.size})"
                )

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.size != self.size:
            raise ValidationError(f"cannot merge {other.size}-class into {self.size}-class")
        self.counts += other.counts
        self.predicted_ignore += other.predicted_ignore
        return self

    def total(self) -> int:
        return int(self.counts.sum())


def accumulate(
    cm: ConfusionMatrix, prediction: LabelMap, truth: LabelMap
) -> ConfusionMatrix:
    """Tally one prediction/truth pair into the matrix."""
    pred = prediction.labels
    true = truth.labels
    if pred.shape != true.shape:
        raise ValidationError(
            f"prediction {pred.shape} and truth {true.shape} differ in shape"
        )
    evaluated = true != IGNORE_INDEX
    pred_ignored = evaluated & (pred == IGNORE_INDEX)
    n_pred_ignored = int(pred_ignored.sum())
    if n_pred_ignored:
        log.info("skipping %d pixels with ignore-valued predictions", n_pred_ignored)
        cm.predicted_ignore += n_pred_ignored
    mask = evaluated & ~pred_ignored
    t = true[mask].astype(np.int64)
    p = pred[mask].astype(np.int64)
    if t.size:
        bad = max(int(t.max()), int(p.max()))
        if bad >= cm.size:
            raise ValidationError(f"label {bad} >= class count {cm.size}")
        flat = np.bincount(t * cm.size + p, minlength=cm.size * cm.size)
        cm.counts += flat.reshape(cm.size, cm.size).astype(np.uint64)
    return cm


def iou_per_class(cm: ConfusionMatrix) -> list[tuple[int, float | None]]:
    """IoU_c = diag / (row + col - diag); zero-union classes are undefined."""
    counts = cm.counts.astype(np.float64)
    diag = np.diag(counts)
    union = counts.sum(axis=1) + counts.sum(axis=0) - diag
    out: list[tuple[int, float | None]] = []
    for c in range(cm.size):
        if union[c] == 0:
            out.append((c, None))
        else:
            out.append((c, float(diag[c] / union[c])))
    return out


def miou(cm: ConfusionMatrix) -> float:
    """Arithmetic mean over classes with a defined IoU."""
    defined = [v for _, v in iou_per_class(cm) if v is not None]
    if not defined:
        raise ValidationError("no evaluable classes: every class has zero union")
    return float(np.mean(defined))


def report(cm: ConfusionMatrix, classes: ClassTable | None = None) -> dict:
    """JSON-ready metrics report: per-class IoU (null when undefined), mIoU,
    pixel totals."""
    ious = iou_per_class(cm)
    names = list(classes.names) if classes is not None else [str(i) for i in range(cm.size)]
    defined = [v for _, v in ious if v is not None]
    return {
        "classes": [
            {"index": c, "name": names[c], "iou": v} for c, v in ious
        ],
        "miou": float(np.mean(defined)) if defined else None,
        "evaluated_pixels": cm.total(),
        "predicted_ignore_pixels": cm.predicted_ignore,
    }


def format_report(rep: dict) -> str:
    """Aligned plain-text table for terminals."""
    name_w = max([len("class")] + [len(c["name"]) for c in rep["classes"]])
    lines = [f"{'class':<{name_w}}  {'index':>5}  {'IoU':>8}"]
    for c in rep["classes"]:
        iou = "-" if c["iou"] is None else f"{c['iou']:.4f}"
        lines.append(f"{c['name']:<{name_w}}  {c['index']:>5}  {iou:>8}")
    miou_s = "-" if rep["miou"] is None else f"{rep['miou']:.4f}"
    lines.append(f"{'mIoU':<{name_w}}  {'':>5}  {miou_s:>8}")
    lines.append(f"evaluated pixels: {rep['evaluated_pixels']}")
    if rep.get("predicted_ignore_pixels"):
        lines.append(f"predicted-ignore pixels skipped: {rep['predicted_ignore_pixels']}")
    return "\n".join(lines)


def report_json(rep: dict) -> str:
    return json.dumps(rep, indent=2)
