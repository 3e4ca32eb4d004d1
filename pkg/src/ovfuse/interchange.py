"""Serialized head-output interchange: SOV3 bundles, label rasters, class tables.

The SOV3 container decouples the fusion engine from any model runtime: an
exporter dumps, per image tile, every prompt's presence score, optional
dense semantic probability map, and instance probability maps with
confidences. All integers are little-endian; all float payloads are 32-bit
IEEE-754, row-major, top-left origin.

Layout (byte-exact):

    magic "SOV3" | version u16=1 | flags u16=0
    image_id: u32 length + UTF-8
    height u32 | width u32 | category_count u16
    per category:  name (u32 len + UTF-8) | prompt_count u16
    per prompt:    text (u32 len + UTF-8) | presence f32
                   | semantic_present u8 | [semantic f32 x H*W]
                   | instance_count u32
    per instance:  confidence f32 | encoding u8 (0=dense, 1=bbox)
                   | [bbox x0,y0,x1,y1 u32 each] | values f32 array

Probability values outside [0, 1] by more than 1e-6 are rejected; within
1e-6 they are clamped, which tolerates exporter rounding without admitting
garbage.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

from .errors import FormatError, TruncatedError, ValidationError

MAGIC = b"SOV3"
FORMAT_VERSION = 1
LABEL_MAGIC = b"LBL1"
LABEL_VERSION = 1
IGNORE_INDEX = 65535

ENCODING_DENSE = 0
ENCODING_BBOX = 1

# Exporter rounding tolerance for probability payloads.
PROB_SLACK = 1e-6


def _check_prob_scalar(x: float, where: str) -> float:
    """Validate, clamp, and round a probability scalar to float32."""
    if math.isnan(x):
        raise ValidationError(f"{where}: NaN probability")
    if x < -PROB_SLACK or x > 1.0 + PROB_SLACK:
        raise ValidationError(f"{where}: value out of [0,1]: {x!r}")
    return float(np.float32(min(max(x, 0.0), 1.0)))


def _check_prob_array(arr: np.ndarray, where: str) -> np.ndarray:
    """Validate a probability raster; returns a float32 array, clamped."""
    a = np.asarray(arr, dtype=np.float32)
    if a.size and bool(np.isnan(a).any()):
        raise ValidationError(f"{where}: NaN probability")
    if a.size:
        lo = float(a.min())
        hi = float(a.max())
        if lo < -PROB_SLACK or hi > 1.0 + PROB_SLACK:
            raise ValidationError(f"{where}: value out of [0,1]: [{lo}, {hi}]")
        if lo < 0.0 or hi > 1.0:
            a = np.clip(a, 0.0, 1.0)
    return a


def _f32_bits(x: float) -> bytes:
    return struct.pack("<f", x)


def _arr_bits_equal(a: np.ndarray | None, b: np.ndarray | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and a.tobytes() == b.tobytes()


@dataclass(eq=False)
class InstanceRecord:
    """One decoder query: a mask probability map plus its confidence.

    ``bbox`` is (x0, y0, x1, y1) with exclusive upper bounds; when set,
    ``values`` holds only the crop and pixels outside are implicitly 0.
    """

    confidence: float
    values: np.ndarray
    bbox: tuple[int, int, int, int] | None = None

    def to_dense(self, height: int, width: int) -> np.ndarray:
        """Expand to a full (height, width) float32 raster."""
        v = np.asarray(self.values, dtype=np.float32)
        if self.bbox is None:
            return v
        x0, y0, x1, y1 = self.bbox
        dense = np.zeros((height, width), dtype=np.float32)
        dense[y0:y1, x0:x1] = v
        return dense

    def __eq__(self, other):
        return (
            isinstance(other, InstanceRecord)
            and _f32_bits(self.confidence) == _f32_bits(other.confidence)
            and self.bbox == other.bbox
            and _arr_bits_equal(np.asarray(self.values), np.asarray(other.values))
        )


@dataclass(eq=False)
class PromptRecord:
    """All head outputs for one (category, prompt text) pair."""

    prompt_text: str
    presence: float
    semantic_map: np.ndarray | None = None
    instances: list[InstanceRecord] = field(default_factory=list)

    def __eq__(self, other):
        return (
            isinstance(other, PromptRecord)
            and self.prompt_text == other.prompt_text
            and _f32_bits(self.presence) == _f32_bits(other.presence)
            and _arr_bits_equal(self.semantic_map, other.semantic_map)
            and self.instances == other.instances
        )


@dataclass(eq=False)
class CategoryRecord:
    name: str
    prompts: list[PromptRecord]

    def __eq__(self, other):
        return (
            isinstance(other, CategoryRecord)
            and self.name == other.name
            and self.prompts == other.prompts
        )


@dataclass(eq=False)
class HeadBundle:
    """Per-image-tile collection of model head outputs, one entry per category."""

    image_id: str
    height: int
    width: int
    categories: list[CategoryRecord]

    def validate(self) -> None:
        """Raise ValidationError naming the first offending field."""
        if self.height < 1 or self.width < 1:
            raise ValidationError(
                f"bundle dimensions must be >= 1, got {self.height}x{self.width}"
            )
        names = [c.name for c in self.categories]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValidationError(f"duplicate category names: {dupes}")
        for ci, cat in enumerate(self.categories):
            where = f"categories[{ci}] ({cat.name!r})"
            if len(cat.prompts) < 1:
                raise ValidationError(f"{where}: category needs >= 1 prompt")
            texts = [p.prompt_text for p in cat.prompts]
            if len(set(texts)) != len(texts):
                raise ValidationError(f"{where}: duplicate prompt texts")
            for pi, prompt in enumerate(cat.prompts):
                pwhere = f"{where}.prompts[{pi}]"
                _check_prob_scalar(prompt.presence, f"{pwhere}.presence")
                if prompt.semantic_map is not None:
                    sem = np.asarray(prompt.semantic_map)
                    if sem.shape != (self.height, self.width):
                        raise ValidationError(
                            f"{pwhere}.semantic_map: shape {sem.shape} != "
                            f"bundle {self.height}x{self.width}"
                        )
                    _check_prob_array(sem, f"{pwhere}.semantic_map")
                for ii, inst in enumerate(prompt.instances):
                    iwhere = f"{pwhere}.instances[{ii}]"
                    _check_prob_scalar(inst.confidence, f"{iwhere}.confidence")
                    vals = np.asarray(inst.values)
                    if inst.bbox is None:
                        if vals.shape != (self.height, self.width):
                            raise ValidationError(
                                f"{iwhere}.values: dense shape {vals.shape} != "
                                f"bundle {self.height}x{self.width}"
                            )
                    else:
                        x0, y0, x1, y1 = inst.bbox
                        if not (0 <= x0 <= x1 <= self.width and 0 <= y0 <= y1 <= self.height):
                            raise ValidationError(
                                f"{iwhere}.bbox: {inst.bbox} outside "
                                f"{self.width}x{self.height} image"
                            )
                        if vals.shape != (y1 - y0, x1 - x0):
                            raise ValidationError(
                                f"{iwhere}.values: cropped shape {vals.shape} != "
                                f"bbox {(y1 - y0, x1 - x0)}"
                            )
                    _check_prob_array(vals, f"{iwhere}.values")

    def __eq__(self, other):
        return (
            isinstance(other, HeadBundle)
            and self.image_id == other.image_id
            and self.height == other.height
            and self.width == other.width
            and self.categories == other.categories
        )


# --------------------------------------------------------------------------
# SOV3 writer


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def write_bundle(bundle: HeadBundle, dest: BinaryIO) -> int:
    """Serialize a validated bundle; returns the byte count written."""
    bundle.validate()
    n = 0

    def put(b: bytes) -> None:
        nonlocal n
        dest.write(b)
        n += len(b)

    put(MAGIC)
    put(struct.pack("<HH", FORMAT_VERSION, 0))
    put(_pack_str(bundle.image_id))
    put(struct.pack("<IIH", bundle.height, bundle.width, len(bundle.categories)))
    for cat in bundle.categories:
        put(_pack_str(cat.name))
        put(struct.pack("<H", len(cat.prompts)))
        for prompt in cat.prompts:
            put(_pack_str(prompt.prompt_text))
            put(struct.pack("<f", _check_prob_scalar(prompt.presence, "presence")))
            if prompt.semantic_map is None:
                put(b"\x00")
            else:
                put(b"\x01")
                sem = _check_prob_array(prompt.semantic_map, "semantic_map")
                put(np.ascontiguousarray(sem, dtype="<f4").tobytes())
            put(struct.pack("<I", len(prompt.instances)))
            for inst in prompt.instances:
                put(struct.pack("<f", _check_prob_scalar(inst.confidence, "confidence")))
                if inst.bbox is None:
                    put(bytes([ENCODING_DENSE]))
                else:
                    put(bytes([ENCODING_BBOX]))
                    put(struct.pack("<IIII", *inst.bbox))
                vals = _check_prob_array(inst.values, "values")
                put(np.ascontiguousarray(vals, dtype="<f4").tobytes())
    return n


def write_bundle_file(bundle: HeadBundle, path: str | Path) -> int:
    with open(path, "wb") as f:
        return write_bundle(bundle, f)


# --------------------------------------------------------------------------
# SOV3 reader


class _Cursor:
    """Bounds-checked little-endian reader over an in-memory buffer."""

    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, count: int, what: str) -> bytes:
        remaining = len(self.data) - self.off
        if count > remaining:
            raise TruncatedError(count, remaining, f"bytes for {what}")
        out = self.data[self.off : self.off + count]
        self.off += count
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f32(self, what: str) -> float:
        return struct.unpack("<f", self.take(4, what))[0]

    def utf8(self, what: str) -> str:
        length = self.u32(f"{what} length")
        raw = self.take(length, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"{what}: invalid UTF-8: {e}") from None

    def f32_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(count * 4, what)
        return np.frombuffer(raw, dtype="<f4", count=count).copy()

    def done(self) -> bool:
        return self.off == len(self.data)


def read_bundle(source: BinaryIO | bytes) -> HeadBundle:
    """Parse and fully validate a SOV3 stream; rejects trailing garbage."""
    data = source if isinstance(source, (bytes, bytearray)) else source.read()
    cur = _Cursor(bytes(data))

    magic = cur.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = cur.u16("version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    flags = cur.u16("flags")
    if flags != 0:
        raise FormatError(f"unsupported flags 0x{flags:04x}")

    image_id = cur.utf8("image_id")
    height = cur.u32("height")
    width = cur.u32("width")
    if height < 1 or width < 1:
        raise ValidationError(f"bundle dimensions must be >= 1, got {height}x{width}")
    n_cat = cur.u16("category count")

    categories: list[CategoryRecord] = []
    for ci in range(n_cat):
        name = cur.utf8(f"categories[{ci}].name")
        n_prompt = cur.u16(f"categories[{ci}] prompt count")
        if n_prompt < 1:
            raise ValidationError(f"categories[{ci}] ({name!r}): category needs >= 1 prompt")
        prompts: list[PromptRecord] = []
        for pi in range(n_prompt):
            pwhere = f"categories[{ci}].prompts[{pi}]"
            text = cur.utf8(f"{pwhere}.text")
            presence = _check_prob_scalar(cur.f32(f"{pwhere}.presence"), f"{pwhere}.presence")
            sem_flag = cur.u8(f"{pwhere}.semantic flag")
            if sem_flag not in (0, 1):
                raise FormatError(f"{pwhere}: semantic flag must be 0 or 1, got {sem_flag}")
            semantic = None
            if sem_flag:
                arr = cur.f32_array(height * width, f"{pwhere}.semantic_map")
                semantic = _check_prob_array(arr, f"{pwhere}.semantic_map").reshape(height, width)
            n_inst = cur.u32(f"{pwhere} instance count")
            instances: list[InstanceRecord] = []
            for ii in range(n_inst):
                iwhere = f"{pwhere}.instances[{ii}]"
                conf = _check_prob_scalar(cur.f32(f"{iwhere}.confidence"), f"{iwhere}.confidence")
                enc = cur.u8(f"{iwhere}.encoding")
                if enc == ENCODING_DENSE:
                    bbox = None
                    shape = (height, width)
                elif enc == ENCODING_BBOX:
                    x0 = cur.u32(f"{iwhere}.bbox.x0")
                    y0 = cur.u32(f"{iwhere}.bbox.y0")
                    x1 = cur.u32(f"{iwhere}.bbox.x1")
                    y1 = cur.u32(f"{iwhere}.bbox.y1")
                    if not (0 <= x0 <= x1 <= width and 0 <= y0 <= y1 <= height):
                        raise ValidationError(
                            f"{iwhere}.bbox: {(x0, y0, x1, y1)} outside {width}x{height} image"
                        )
                    bbox = (x0, y0, x1, y1)
                    shape = (y1 - y0, x1 - x0)
                else:
                    raise FormatError(f"{iwhere}: unknown encoding {enc}")
                vals = cur.f32_array(shape[0] * shape[1], f"{iwhere}.values")
                vals = _check_prob_array(vals, f"{iwhere}.values").reshape(shape)
                instances.append(InstanceRecord(conf, vals, bbox))
            prompts.append(PromptRecord(text, presence, semantic, instances))
        categories.append(CategoryRecord(name, prompts))

    if not cur.done():
        raise FormatError(f"trailing garbage: {len(cur.data) - cur.off} bytes after bundle")

    bundle = HeadBundle(image_id, height, width, categories)
    bundle.validate()
    return bundle


def read_bundle_file(path: str | Path) -> HeadBundle:
    with open(path, "rb") as f:
        return read_bundle(f)


# --------------------------------------------------------------------------
# Label rasters


@dataclass(eq=False)
class LabelMap:
    """H x W raster of class-table indices; 65535 is the reserved ignore value."""

    labels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.labels)
        if a.ndim != 2:
            raise ValidationError(f"label raster must be 2-D, got shape {a.shape}")
        if a.dtype != np.uint16:
            if a.size and (a.min() < 0 or a.max() > IGNORE_INDEX):
                raise ValidationError("label values must fit in u16")
            a = a.astype(np.uint16)
        self.labels = a

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def validate_against(self, classes: "ClassTable") -> None:
        lab = self.labels
        real = lab[lab != IGNORE_INDEX]
        if real.size and int(real.max()) >= len(classes.names):
            raise ValidationError(
                f"label {int(real.max())} >= class table size {len(classes.names)}"
            )

    def __eq__(self, other):
        return isinstance(other, LabelMap) and _arr_bits_equal(self.labels, other.labels)


def write_label_map(label_map: LabelMap, dest: BinaryIO) -> int:
    """16-byte header (magic, version, reserved, H, W) then u16 x H*W."""
    header = LABEL_MAGIC + struct.pack(
        "<HHII", LABEL_VERSION, 0, label_map.height, label_map.width
    )
    body = np.ascontiguousarray(label_map.labels, dtype="<u2").tobytes()
    dest.write(header)
    dest.write(body)
    return len(header) + len(body)


def read_label_map(source: BinaryIO | bytes) -> LabelMap:
    data = source if isinstance(source, (bytes, bytearray)) else source.read()
    cur = _Cursor(bytes(data))
    magic = cur.take(4, "label magic")
    if magic != LABEL_MAGIC:
        raise FormatError(f"bad label magic {magic!r}, expected {LABEL_MAGIC!r}")
    version = cur.u16("label version")
    if version != LABEL_VERSION:
        raise FormatError(f"unsupported label raster version {version}")
    cur.u16("reserved")
    h = cur.u32("height")
    w = cur.u32("width")
    if h < 1 or w < 1:
        raise FormatError(f"label raster dimensions must be >= 1, got {h}x{w}")
    raw = cur.take(h * w * 2, "label values")
    if not cur.done():
        raise FormatError(f"trailing garbage: {len(cur.data) - cur.off} bytes after raster")
    labels = np.frombuffer(raw, dtype="<u2", count=h * w).reshape(h, w).copy()
    return LabelMap(labels)


def write_label_map_file(label_map: LabelMap, path: str | Path) -> int:
    with open(path, "wb") as f:
        return write_label_map(label_map, f)


def read_label_map_file(path: str | Path) -> LabelMap:
    with open(path, "rb") as f:
        return read_label_map(f)


# --------------------------------------------------------------------------
# Class tables


@dataclass(frozen=True)
class ClassTable:
    """Ordered vocabulary: index = position; optional background entry."""

    names: tuple[str, ...]
    background_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ValidationError("class names must be unique")
        if len(self.names) >= IGNORE_INDEX:
            raise ValidationError(f"class table too large (max {IGNORE_INDEX - 1} entries)")
        if self.background_index is not None and not (
            0 <= self.background_index < len(self.names)
        ):
            raise ValidationError(
                f"background_index {self.background_index} not a valid entry"
            )

    @property
    def ignore_index(self) -> int:
        return IGNORE_INDEX

    def non_background(self) -> list[tuple[int, str]]:
        """(index, name) pairs excluding the background entry, table order."""
        return [
            (i, n) for i, n in enumerate(self.names) if i != self.background_index
        ]

    def to_json(self) -> str:
        return json.dumps(
            {"classes": list(self.names), "background_index": self.background_index},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ClassTable":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise FormatError(f"class table is not valid JSON: {e}") from None
        if not isinstance(obj, dict) or "classes" not in obj:
            raise FormatError('class table must be an object with a "classes" list')
        names = obj["classes"]
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            raise FormatError('"classes" must be a list of strings')
        bg = obj.get("background_index")
        if bg is not None and not isinstance(bg, int):
            raise FormatError('"background_index" must be an integer or null')
        return cls(tuple(names), bg)

    @classmethod
    def from_file(cls, path: str | Path) -> "ClassTable":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def bundle_category_names(bundle: HeadBundle) -> list[str]:
    return [c.name for c in bundle.categories]


def iter_instance_records(bundle: HeadBundle) -> Iterable[InstanceRecord]:
    for cat in bundle.categories:
        for prompt in cat.prompts:
            yield from prompt.instances
