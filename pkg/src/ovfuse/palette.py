"""Label-map rendering with a deterministic 256-entry palette.

The default palette walks the hue circle by the golden-ratio conjugate
(index * 0.618033988749895 mod 1) through three saturation/value tiers,
cycling by index, so nearby class indices get visually distant colors.
All 256 entries are distinct RGB triples, which makes rendered images
decodable back to label maps.
"""

from __future__ import annotations

import colorsys
import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, ValidationError
from .interchange import IGNORE_INDEX, ClassTable, LabelMap

log = logging.getLogger(__name__)

_GOLDEN_CONJ = 0.618033988749895
_TIERS = ((0.85, 0.95), (0.60, 0.75), (0.95, 0.55))  # (saturation, value)


def _default_entry(i: int) -> tuple[int, int, int]:
    hue = (i * _GOLDEN_CONJ) % 1.0
    sat, val = _TIERS[i % len(_TIERS)]
    r, g, b = colorsys.hsv_to_rgb(hue, sat, val)
    return (round(r * 255), round(g * 255), round(b * 255))


def default_palette() -> list[tuple[int, int, int]]:
    """256 distinct RGB triples; entry i colors class index i."""
    return [_default_entry(i) for i in range(256)]


_DEFAULT = default_palette()
assert len(set(_DEFAULT)) == 256, "default palette entries must be distinct"


def load_palette_file(path: str | Path, classes: ClassTable) -> list[tuple[int, int, int]]:
    """Palette JSON maps class name -> [r, g, b]; unlisted classes keep the
    default color for their index. An empty object falls back entirely."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"palette file is not valid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise FormatError("palette file must be a JSON object of name -> [r,g,b]")
    if not obj:
        log.warning("palette file %s is empty; using the default palette", path)
        return list(_DEFAULT)
    palette = list(_DEFAULT)
    known = {n: i for i, n in enumerate(classes.names)}
    for name, rgb in obj.items():
        if name not in known:
            raise ValidationError(f"palette names unknown class {name!r}")
        if (
            not isinstance(rgb, list)
            or len(rgb) != 3
            or not all(isinstance(v, int) and 0 <= v <= 255 for v in rgb)
        ):
            raise FormatError(f"palette entry for {name!r} must be [r, g, b] bytes")
        palette[known[name]] = tuple(rgb)
    return palette


def render_labels(
    label_map: LabelMap,
    classes: ClassTable,
    palette: list[tuple[int, int, int]] | None = None,
    ignore_color: str = "transparent",
) -> Image.Image:
    """8-bit-per-channel image; ignore pixels are transparent or black."""
    label_map.validate_against(classes)
    if len(classes.names) > 256:
        raise ValidationError("default rendering supports at most 256 classes")
    if ignore_color not in ("transparent", "black"):
        raise ValidationError(f"ignore_color must be transparent or black, got {ignore_color!r}")
    pal = palette if palette is not None else _DEFAULT
    if len(pal) < len(classes.names):
        raise ValidationError(
            f"palette has {len(pal)} entries for {len(classes.names)} classes"
        )
    lut = np.zeros((256, 4), dtype=np.uint8)
    for i, (r, g, b) in enumerate(pal[:256]):
        lut[i] = (r, g, b, 255)

    labels = label_map.labels
    ignore = labels == IGNORE_INDEX
    safe = np.where(ignore, 0, labels).astype(np.uint8)
    rgba = lut[safe]
    if ignore_color == "transparent":
        rgba[ignore] = (0, 0, 0, 0)
        return Image.fromarray(rgba, mode="RGBA")
    rgba[ignore] = (0, 0, 0, 255)
    return Image.fromarray(rgba[:, :, :3], mode="RGB")


def decode_labels(
    image: Image.Image, classes: ClassTable, palette: list[tuple[int, int, int]] | None = None
) -> LabelMap:
    """Inverse of render_labels for images produced with the same palette."""
    pal = palette if palette is not None else _DEFAULT
    inverse = {rgb: i for i, rgb in enumerate(pal[: len(classes.names)])}
    arr = np.asarray(image.convert("RGBA"))
    h, w = arr.shape[:2]
    labels = np.full((h, w), IGNORE_INDEX, dtype=np.uint16)
    opaque = arr[:, :, 3] == 255
    for rgb, idx in inverse.items():
        match = opaque & np.all(arr[:, :, :3] == np.asarray(rgb, dtype=np.uint8), axis=2)
        labels[match] = idx
    unknown = opaque & (labels == IGNORE_INDEX)
    if bool(unknown.any()):
        y, x = np.argwhere(unknown)[0]
        raise ValidationError(
            f"pixel ({int(x)}, {int(y)}) has color {tuple(arr[y, x, :3])} not in the palette"
        )
    return LabelMap(labels)
