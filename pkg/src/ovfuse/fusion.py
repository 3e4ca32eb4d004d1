"""Probability-map fusion: the per-category pipeline and final labeling.

Every operation is a pure function over float32 rasters in [0, 1]. The
per-category composition is

    filter -> aggregate -> dual-head fuse -> presence gate (per prompt)
    -> per-pixel max across prompts

followed by a threshold-guarded argmax across categories. All reductions
stay in float32 with no re-association, so a naive per-pixel reference
computes bit-identical results.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .interchange import (
    IGNORE_INDEX,
    ClassTable,
    HeadBundle,
    CategoryRecord,
    InstanceRecord,
    LabelMap,
)

ProbMap = np.ndarray  # float32, shape (H, W), values in [0, 1]


@dataclass
class FusionConfig:
    """Per-dataset tunables; the defaults are engine policy, not dogma.

    tie_break is fixed: the lowest category index wins exact ties, which
    keeps outputs stable across thread counts.
    """

    tau: float = 0.5
    instance_conf_threshold: float = 0.5
    presence_gating: bool = True
    tie_break: str = "lowest-index"

    def __post_init__(self):
        if not (0.0 <= self.tau <= 1.0):
            raise ValidationError(f"tau must be in [0,1], got {self.tau}")
        if not (0.0 <= self.instance_conf_threshold <= 1.0):
            raise ValidationError(
                f"instance_conf_threshold must be in [0,1], got {self.instance_conf_threshold}"
            )
        if self.tie_break != "lowest-index":
            raise ValidationError(f"unsupported tie_break {self.tie_break!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "tau": self.tau,
                "instance_conf_threshold": self.instance_conf_threshold,
                "presence_gating": self.presence_gating,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "FusionConfig":
        obj = json.loads(text)
        if not isinstance(obj, dict):
            raise ValidationError("fusion config must be a JSON object")
        known = {"tau", "instance_conf_threshold", "presence_gating"}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown fusion config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_file(cls, path: str | Path) -> "FusionConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def filter_instances(
    instances: Sequence[InstanceRecord], threshold: float
) -> list[InstanceRecord]:
    """Keep instances whose confidence >= threshold, order preserved."""
    if not (0.0 <= threshold <= 1.0):
        raise ValidationError(f"threshold must be in [0,1], got {threshold}")
    return [inst for inst in instances if inst.confidence >= threshold]


def aggregate_instances(
    instances: Sequence[InstanceRecord], height: int, width: int
) -> ProbMap:
    """Per-pixel max of confidence-weighted instance maps; empty -> zeros."""
    out = np.zeros((height, width), dtype=np.float32)
    for inst in instances:
        vals = np.asarray(inst.values, dtype=np.float32)
        conf = np.float32(inst.confidence)
        if inst.bbox is None:
            if vals.shape != (height, width):
                raise ValidationError(
                    f"dense instance shape {vals.shape} exceeds ({height}, {width})"
                )
            np.maximum(out, vals * conf, out=out)
        else:
            x0, y0, x1, y1 = inst.bbox
            if not (0 <= x0 <= x1 <= width and 0 <= y0 <= y1 <= height):
                raise ValidationError(
                    f"instance bbox {inst.bbox} exceeds ({height}, {width})"
                )
            if vals.shape != (y1 - y0, x1 - x0):
                raise ValidationError(
                    f"cropped instance shape {vals.shape} != bbox {(y1 - y0, x1 - x0)}"
                )
            window = out[y0:y1, x0:x1]
            np.maximum(window, vals * conf, out=window)
    return out


def fuse_dual_head(semantic: ProbMap | None, inst_agg: ProbMap) -> ProbMap:
    """Per-pixel max of the two heads; an absent semantic map counts as zero."""
    inst_agg = np.asarray(inst_agg, dtype=np.float32)
    if semantic is None:
        return inst_agg.copy()
    semantic = np.asarray(semantic, dtype=np.float32)
    if semantic.shape != inst_agg.shape:
        raise ValidationError(
            f"semantic shape {semantic.shape} != instance aggregate {inst_agg.shape}"
        )
    return np.maximum(semantic, inst_agg)


def apply_presence(fused: ProbMap, presence: float, enabled: bool = True) -> ProbMap:
    """Soft-gate a fused map by the tile-global presence score."""
    if not (0.0 <= presence <= 1.0):
        raise ValidationError(f"presence must be in [0,1], got {presence}")
    fused = np.asarray(fused, dtype=np.float32)
    if not enabled:
        return fused.copy()
    return fused * np.float32(presence)


def reduce_prompts(gated_maps: Sequence[ProbMap]) -> ProbMap:
    """Per-pixel max across a category's prompt maps."""
    if len(gated_maps) == 0:
        raise ValidationError("reduce_prompts needs at least one map")
    out = np.asarray(gated_maps[0], dtype=np.float32).copy()
    for m in gated_maps[1:]:
        m = np.asarray(m, dtype=np.float32)
        if m.shape != out.shape:
            raise ValidationError(f"prompt map shape {m.shape} != {out.shape}")
        np.maximum(out, m, out=out)
    return out


def label_argmax(
    category_maps: Sequence[ProbMap], classes: ClassTable, tau: float
) -> LabelMap:
    """Assign each pixel the highest-probability category; ties go to the
    lowest class index. With a background entry, winners below tau fall to
    background; without one, tau is ignored."""
    non_bg = classes.non_background()
    if len(category_maps) != len(non_bg):
        raise ValidationError(
            f"got {len(category_maps)} maps for {len(non_bg)} non-background classes"
        )
    if not category_maps:
        raise ValidationError("cannot label with an empty vocabulary")
    stack = np.stack([np.asarray(m, dtype=np.float32) for m in category_maps])
    if stack.ndim != 3:
        raise ValidationError("category maps must all be 2-D and equally sized")

    winner_pos = np.argmax(stack, axis=0)  # first max -> lowest index
    index_of = np.asarray([i for i, _ in non_bg], dtype=np.uint16)
    labels = index_of[winner_pos]
    if classes.background_index is not None:
        winner_val = np.max(stack, axis=0)
        labels = np.where(
            winner_val < np.float32(tau),
            np.uint16(classes.background_index),
            labels,
        )
    return LabelMap(labels.astype(np.uint16))


def _category_map(
    category: CategoryRecord, height: int, width: int, config: FusionConfig
) -> ProbMap:
    gated = []
    for prompt in category.prompts:
        kept = filter_instances(prompt.instances, config.instance_conf_threshold)
        agg = aggregate_instances(kept, height, width)
        fused = fuse_dual_head(prompt.semantic_map, agg)
        gated.append(apply_presence(fused, prompt.presence, config.presence_gating))
    return reduce_prompts(gated)


def check_vocabulary(bundle: HeadBundle, classes: ClassTable) -> list[str]:
    """Match bundle categories to the non-background class names; returns
    the names in class-table order."""
    table_names = [n for _, n in classes.non_background()]
    bundle_names = {c.name for c in bundle.categories}
    missing = [n for n in table_names if n not in bundle_names]
    extra = sorted(bundle_names - set(table_names))
    if missing or extra:
        raise ValidationError(
            f"bundle/class-table mismatch: missing {missing}, extra {extra}"
        )
    return table_names


def category_maps(
    bundle: HeadBundle,
    classes: ClassTable,
    config: FusionConfig,
    threads: int = 1,
) -> list[ProbMap]:
    """Fused, gated, prompt-reduced map per non-background class, table order."""
    names = check_vocabulary(bundle, classes)
    by_name = {c.name: c for c in bundle.categories}
    h, w = bundle.height, bundle.width

    def one(name: str) -> ProbMap:
        return _category_map(by_name[name], h, w, config)

    if threads <= 1 or len(names) <= 1:
        return [one(n) for n in names]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, names))


def run_pipeline(
    bundle: HeadBundle,
    classes: ClassTable,
    config: FusionConfig,
    threads: int = 1,
) -> LabelMap:
    """Full per-tile inference: per-category fusion then guarded argmax.

    Output is bit-identical for any thread count: per-category work is
    independent and the reductions are order-insensitive under the
    lowest-index tie-break.
    """
    maps = category_maps(bundle, classes, config, threads=threads)
    return label_argmax(maps, classes, config.tau)
