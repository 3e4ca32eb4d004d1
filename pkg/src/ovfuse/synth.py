"""Reproducible synthetic fixtures: scene bundles, adversarial bundles,
and the dual-head ablation scenario.

All randomness comes from the counter-based generator in ``rng``, consumed
in the documented field order, so every fixture regenerates bit-exactly
from its seed on any platform. Scenes are built from axis-aligned
rectangles only, which keeps ground truth exact by construction:

* "stuff" categories get one large region with a strong semantic map and
  fragmented low-weight instances;
* "thing" categories get small rectangles with sharp, high-confidence
  instance maps and a weak semantic response;
* distractor categories are absent from the ground truth, carry presence
  scores near zero, and hallucinate a mid-strength region, which is what
  presence gating exists to suppress.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .fusion import FusionConfig
from .interchange import (
    CategoryRecord,
    ClassTable,
    HeadBundle,
    InstanceRecord,
    LabelMap,
    PromptRecord,
)
from .rng import CounterRng

STUFF_NAMES = ["road", "water", "bareland", "grass", "forest", "farmland"]
THING_NAMES = ["building", "vehicle", "ship", "aircraft", "storage tank", "greenhouse"]

Rect = tuple[int, int, int, int]  # (x0, y0, x1, y1), exclusive upper bounds


@dataclass
class SynthSpec:
    seed: int
    height: int = 32
    width: int = 32
    category_count: int = 4
    prompts_per_category: int = 1
    max_instances: int = 4
    stuff_fraction: float = 0.5
    noise_level: float = 0.1
    distractor_count: int = 0

    def __post_init__(self):
        for name in ("height", "width", "category_count", "prompts_per_category"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.max_instances < 0:
            raise ValidationError("max_instances must be >= 0")
        for name in ("stuff_fraction", "noise_level"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} must be in [0,1], got {v}")
        if not (0 <= self.distractor_count <= self.category_count):
            raise ValidationError("distractor_count must be in [0, category_count]")

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        obj = json.loads(text)
        if not isinstance(obj, dict):
            raise ValidationError("synth spec must be a JSON object")
        return cls(**obj)


def _category_names(spec: SynthSpec) -> tuple[list[str], int]:
    """Names for the spec's categories; first n_stuff are stuff."""
    n_stuff = round(spec.stuff_fraction * spec.category_count)
    names: list[str] = []
    for i in range(spec.category_count):
        pool = STUFF_NAMES if i < n_stuff else THING_NAMES
        j = i if i < n_stuff else i - n_stuff
        base = pool[j % len(pool)]
        name = base if j < len(pool) else f"{base} {j // len(pool) + 1}"
        names.append(name)
    return names, n_stuff


def _rand_rect(rng: CounterRng, h: int, w: int, min_frac: float, max_frac: float) -> Rect:
    """Random rectangle whose sides span [min_frac, max_frac] of the image."""
    rw = max(1, min(w, rng.next_int(max(1, int(w * min_frac)), max(1, int(w * max_frac)))))
    rh = max(1, min(h, rng.next_int(max(1, int(h * min_frac)), max(1, int(h * max_frac)))))
    x0 = rng.next_int(0, w - rw)
    y0 = rng.next_int(0, h - rh)
    return (x0, y0, x0 + rw, y0 + rh)


def _fill_region(
    canvas: np.ndarray, rect: Rect, rng: CounterRng, base: float, spread: float, noise: float
) -> None:
    """Write base + jitter into a rect, clipped to [0, 1]."""
    x0, y0, x1, y1 = rect
    area = (y1 - y0) * (x1 - x0)
    if area == 0:
        return
    jitter = (rng.fill_f32(area).reshape(y1 - y0, x1 - x0) - np.float32(0.5)) * np.float32(
        2.0 * spread + 2.0 * noise
    )
    canvas[y0:y1, x0:x1] = np.clip(np.float32(base) + jitter, 0.0, 1.0)


def _background_noise(rng: CounterRng, h: int, w: int, level: float) -> np.ndarray:
    return rng.fill_f32(h * w).reshape(h, w) * np.float32(0.15 * level)


def _crop(values: np.ndarray, rect: Rect) -> np.ndarray:
    x0, y0, x1, y1 = rect
    return values[y0:y1, x0:x1]


def generate(spec: SynthSpec) -> tuple[HeadBundle, LabelMap, ClassTable]:
    """Deterministic scene bundle with exact ground truth.

    Consumption order per category: region geometry, then per prompt the
    presence score, semantic payload, and instance payloads.
    """
    rng = CounterRng(spec.seed)
    h, w = spec.height, spec.width
    names, n_stuff = _category_names(spec)
    n_present = spec.category_count - spec.distractor_count
    classes = ClassTable(tuple(names) + ("background",), background_index=spec.category_count)

    gt = np.full((h, w), spec.category_count, dtype=np.uint16)
    regions: list[list[Rect]] = []
    for ci in range(spec.category_count):
        if ci >= n_present:
            regions.append([])
            continue
        if ci < n_stuff:
            rects = [_rand_rect(rng, h, w, 0.3, 0.65)]
        else:
            count = rng.next_int(1, 3)
            rects = [_rand_rect(rng, h, w, 0.05, 0.2) for _ in range(count)]
        for r in rects:
            x0, y0, x1, y1 = r
            gt[y0:y1, x0:x1] = ci
        regions.append(rects)

    categories: list[CategoryRecord] = []
    for ci, name in enumerate(names):
        is_stuff = ci < n_stuff
        present = ci < n_present
        prompts: list[PromptRecord] = []
        for pi in range(spec.prompts_per_category):
            strength = 1.0 if pi == 0 else 0.4 + 0.3 * rng.next_f32()
            if present:
                presence = 0.88 + 0.12 * rng.next_f32()
            else:
                presence = 0.12 * rng.next_f32()

            semantic = _background_noise(rng, h, w, spec.noise_level)
            instances: list[InstanceRecord] = []
            if present:
                for rect in regions[ci]:
                    if is_stuff:
                        base = (0.72 + 0.18 * rng.next_f32()) * strength
                    else:
                        base = (0.30 + 0.08 * rng.next_f32()) * strength
                    _fill_region(semantic, rect, rng, base, 0.04, 0.04 * spec.noise_level)
                if is_stuff:
                    instances = _fragment_instances(
                        rng, h, w, regions[ci][0], spec.max_instances, strength
                    )
                else:
                    instances = _thing_instances(
                        rng, h, w, regions[ci], spec.max_instances, strength,
                        spec.noise_level,
                    )
            else:
                # hallucinated response on an absent category
                ghost = _rand_rect(rng, h, w, 0.15, 0.4)
                _fill_region(
                    semantic, ghost, rng, (0.45 + 0.2 * rng.next_f32()) * strength,
                    0.05, 0.04 * spec.noise_level,
                )
                if spec.max_instances > 0:
                    vals = np.zeros((h, w), dtype=np.float32)
                    _fill_region(vals, ghost, rng, 0.5 * strength, 0.05, 0.0)
                    instances = [
                        InstanceRecord(
                            0.5 + 0.2 * rng.next_f32(), _crop(vals, ghost), ghost
                        )
                    ]
            text = name if pi == 0 else (f"{name} area" if pi == 1 else f"{name} region {pi}")
            prompts.append(PromptRecord(text, presence, semantic, instances))
        categories.append(CategoryRecord(name, prompts))

    bundle = HeadBundle(f"synth-{spec.seed}", h, w, categories)
    bundle.validate()
    return bundle, LabelMap(gt), classes


def _thing_instances(
    rng: CounterRng,
    h: int,
    w: int,
    rects: list[Rect],
    max_instances: int,
    strength: float,
    noise_level: float,
) -> list[InstanceRecord]:
    """Sharp, high-confidence mask per object rectangle, bbox-cropped."""
    instances = []
    for rect in rects[:max_instances]:
        vals = np.zeros((h, w), dtype=np.float32)
        _fill_region(vals, rect, rng, (0.86 + 0.12 * rng.next_f32()) * strength, 0.03, 0.0)
        conf = min(1.0, (0.82 + 0.15 * rng.next_f32()) * strength)
        instances.append(InstanceRecord(conf, _crop(vals, rect), rect))
    if instances and len(instances) < max_instances and noise_level > 0.3:
        # spurious low-confidence detection, prey for the prefilter
        ghost = _rand_rect(rng, h, w, 0.05, 0.15)
        vals = np.zeros((h, w), dtype=np.float32)
        _fill_region(vals, ghost, rng, 0.6 * strength, 0.05, 0.0)
        instances.append(InstanceRecord(0.05 + 0.2 * rng.next_f32(), _crop(vals, ghost), ghost))
    return instances


def _fragment_instances(
    rng: CounterRng, h: int, w: int, region: Rect, max_instances: int, strength: float
) -> list[InstanceRecord]:
    """Fragmented, mid-weight strips over an amorphous region."""
    if max_instances == 0:
        return []
    x0, y0, x1, y1 = region
    span = x1 - x0
    count = min(max_instances, rng.next_int(1, 3))
    step = max(1, span // (2 * count))
    instances = []
    for i in range(count):
        fx0 = x0 + 2 * i * step
        fx1 = min(x1, fx0 + step)
        if fx0 >= fx1:
            break
        frag = (fx0, y0, fx1, y1)
        vals = np.zeros((h, w), dtype=np.float32)
        _fill_region(vals, frag, rng, (0.55 + 0.2 * rng.next_f32()) * strength, 0.04, 0.0)
        instances.append(
            InstanceRecord((0.45 + 0.2 * rng.next_f32()) * strength, _crop(vals, frag), frag)
        )
    return instances


# --------------------------------------------------------------------------
# Adversarial bundles for equivalence/fuzz suites: uniform-random payloads,
# mixed encodings, shuffled category order, occasional degenerate shapes.


def random_bundle(
    seed: int,
    max_hw: int = 64,
    max_categories: int = 12,
    max_prompts: int = 3,
    max_instances: int = 8,
) -> tuple[HeadBundle, ClassTable]:
    rng = CounterRng(seed)
    h = rng.next_int(1, max_hw)
    w = rng.next_int(1, max_hw)
    n_cat = rng.next_int(1, max_categories)
    cat_names = [f"cat_{i:02d}" for i in range(n_cat)]

    has_bg = rng.next_u64() % 2 == 0
    if has_bg:
        bg_pos = rng.next_int(0, n_cat)
        table = cat_names[:bg_pos] + ["void"] + cat_names[bg_pos:]
        classes = ClassTable(tuple(table), background_index=bg_pos)
    else:
        classes = ClassTable(tuple(cat_names), background_index=None)

    categories = []
    for name in cat_names:
        prompts = []
        for pi in range(rng.next_int(1, max_prompts)):
            presence = rng.next_f32()
            semantic = None
            if rng.next_u64() % 4 != 0:
                semantic = rng.fill_f32(h * w).reshape(h, w)
            instances = []
            for _ in range(rng.next_int(0, max_instances)):
                conf = rng.next_f32()
                if rng.next_u64() % 2 == 0:
                    instances.append(
                        InstanceRecord(conf, rng.fill_f32(h * w).reshape(h, w), None)
                    )
                else:
                    x0 = rng.next_int(0, w)
                    x1 = rng.next_int(x0, w)
                    y0 = rng.next_int(0, h)
                    y1 = rng.next_int(y0, h)
                    vals = rng.fill_f32((y1 - y0) * (x1 - x0)).reshape(y1 - y0, x1 - x0)
                    instances.append(InstanceRecord(conf, vals, (x0, y0, x1, y1)))
            prompts.append(PromptRecord(f"{name} p{pi}", presence, semantic, instances))
        categories.append(CategoryRecord(name, prompts))

    rot = rng.next_int(0, n_cat - 1) if n_cat > 1 else 0
    categories = categories[rot:] + categories[:rot]
    bundle = HeadBundle(f"rand-{seed}", h, w, categories)
    bundle.validate()
    return bundle, classes


def random_case(seed: int, **kwargs) -> tuple[HeadBundle, ClassTable, FusionConfig]:
    """Bundle plus a randomized fusion config, for equivalence suites."""
    bundle, classes = random_bundle(seed, **kwargs)
    crng = CounterRng(seed).fork(0xC0F16)
    config = FusionConfig(
        tau=crng.next_f32(),
        instance_conf_threshold=crng.next_f32(),
        presence_gating=crng.next_u64() % 2 == 0,
    )
    return bundle, classes, config


# --------------------------------------------------------------------------
# Ablation scenario: things recoverable only from instances, stuff only
# from semantics, so the fused result strictly beats both single heads.


@dataclass
class AblationScenario:
    full: HeadBundle
    instance_only: HeadBundle
    semantic_only: HeadBundle
    truth: LabelMap
    classes: ClassTable
    config: FusionConfig = field(
        default_factory=lambda: FusionConfig(tau=0.35, instance_conf_threshold=0.5)
    )


def _strip_semantic(bundle: HeadBundle) -> HeadBundle:
    cats = [
        CategoryRecord(
            c.name,
            [PromptRecord(p.prompt_text, p.presence, None, p.instances) for p in c.prompts],
        )
        for c in bundle.categories
    ]
    return HeadBundle(bundle.image_id + "/instance-only", bundle.height, bundle.width, cats)


def _strip_instances(bundle: HeadBundle) -> HeadBundle:
    cats = [
        CategoryRecord(
            c.name,
            [PromptRecord(p.prompt_text, p.presence, p.semantic_map, []) for p in c.prompts],
        )
        for c in bundle.categories
    ]
    return HeadBundle(bundle.image_id + "/semantic-only", bundle.height, bundle.width, cats)


def ablation_scenario(seed: int, stuff_fraction: float = 0.5) -> AblationScenario:
    """Four-category quadrant scene (2 stuff + 2 things + background).

    Level design, with tau = 0.35 and gating by presence ~0.95:
    thing semantics sit near 0.21 after gating (below tau, invisible to the
    semantic head alone), thing instances near 0.8; stuff semantics near
    0.8, stuff instances are strips covering about half the region at
    weight ~0.43. Margins are wide enough that jitter never flips the
    fused > single-head ordering when both kinds are present.
    """
    rng = CounterRng(seed).fork(0xAB1A7E)
    h = w = 64
    n_total = 4
    n_stuff = round(stuff_fraction * n_total)
    names = [STUFF_NAMES[i] for i in range(n_stuff)] + [
        THING_NAMES[i] for i in range(n_total - n_stuff)
    ]
    classes = ClassTable(tuple(names) + ("background",), background_index=n_total)

    cells = [(0, 0, 32, 32), (32, 0, 64, 32), (0, 32, 32, 64), (32, 32, 64, 64)]
    gt = np.full((h, w), n_total, dtype=np.uint16)
    categories: list[CategoryRecord] = []
    for ci, name in enumerate(names):
        cx0, cy0, cx1, cy1 = cells[ci]
        is_stuff = ci < n_stuff
        semantic = _background_noise(rng, h, w, 0.3)
        instances: list[InstanceRecord] = []
        if is_stuff:
            rect = (
                cx0 + rng.next_int(1, 4),
                cy0 + rng.next_int(1, 4),
                cx1 - rng.next_int(1, 4),
                cy1 - rng.next_int(1, 4),
            )
            x0, y0, x1, y1 = rect
            gt[y0:y1, x0:x1] = ci
            _fill_region(semantic, rect, rng, 0.85 + 0.1 * rng.next_f32(), 0.02, 0.0)
            # fragments over the left half only: partial instance-head credit
            mid = x0 + max(1, (x1 - x0) // 2)
            frag = (x0, y0, mid, y1)
            vals = np.zeros((h, w), dtype=np.float32)
            _fill_region(vals, frag, rng, 0.63 + 0.04 * rng.next_f32(), 0.02, 0.0)
            instances.append(
                InstanceRecord(0.68 + 0.04 * rng.next_f32(), _crop(vals, frag), frag)
            )
        else:
            for sub in range(3):
                sx = cx0 + 2 + (sub % 2) * 16 + rng.next_int(0, 4)
                sy = cy0 + 2 + (sub // 2) * 16 + rng.next_int(0, 4)
                side = rng.next_int(5, 9)
                rect = (sx, sy, min(sx + side, cx1 - 1), min(sy + side, cy1 - 1))
                x0, y0, x1, y1 = rect
                gt[y0:y1, x0:x1] = ci
                _fill_region(semantic, rect, rng, 0.20 + 0.04 * rng.next_f32(), 0.02, 0.0)
                vals = np.zeros((h, w), dtype=np.float32)
                _fill_region(vals, rect, rng, 0.90 + 0.06 * rng.next_f32(), 0.02, 0.0)
                instances.append(
                    InstanceRecord(0.90 + 0.06 * rng.next_f32(), _crop(vals, rect), rect)
                )
        presence = 0.93 + 0.05 * rng.next_f32()
        categories.append(
            CategoryRecord(name, [PromptRecord(name, presence, semantic, instances)])
        )

    full = HeadBundle(f"ablation-{seed}", h, w, categories)
    full.validate()
    return AblationScenario(
        full=full,
        instance_only=_strip_semantic(full),
        semantic_only=_strip_instances(full),
        truth=LabelMap(gt),
        classes=classes,
    )


# --------------------------------------------------------------------------
# Fixture manifests: seed -> digests, so fixture sets are regenerable and
# checkable anywhere.


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return f"sha256:{digest}"


def write_fixture_manifest(
    path: str | Path, spec: SynthSpec, config: FusionConfig, digests: dict[str, str]
) -> None:
    obj = {
        "format": "ovfuse-fixture",
        "version": 1,
        "seed": spec.seed,
        "spec": json.loads(spec.to_json()),
        "config": json.loads(config.to_json()),
        "digests": digests,
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
