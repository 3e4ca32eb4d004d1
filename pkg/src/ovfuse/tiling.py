"""Gigapixel support: window planning, streamed stitching, tile manifests.

Rasters beyond model input size are processed as a deterministic row-major
grid of windows. Disjoint windows stitch in label space; overlapping
windows stitch in probability space by per-pixel max, consistent with the
fusion semantics, and get labeled once at canvas scale.

Stitchers accept any iterable of per-tile results and consume it lazily,
so peak memory stays at canvas + one tile stack.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import FormatError, ValidationError
from .interchange import IGNORE_INDEX, LabelMap

Window = tuple[int, int, int, int]  # (x0, y0, x1, y1), exclusive upper bounds

DEFAULT_TILE_SIZE = 1008

MANIFEST_FORMAT = "ovfuse-tiles"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class TileGrid:
    image_height: int
    image_width: int
    tile_size: int
    overlap: int
    tiles: tuple[Window, ...]


def _starts(extent: int, tile: int, stride: int, exact_cover: bool) -> list[int]:
    if extent <= tile:
        return [0]
    if exact_cover:
        # zero overlap: partition; the edge window is clamped, not shifted,
        # so every pixel is covered exactly once
        return list(range(0, extent, tile))
    xs = list(range(0, extent - tile + 1, stride))
    if xs[-1] != extent - tile:
        xs.append(extent - tile)  # last window shifted inward to the edge
    return xs


def plan_tiles(
    image_height: int,
    image_width: int,
    tile_size: int = DEFAULT_TILE_SIZE,
    overlap: int = 0,
) -> TileGrid:
    """Row-major grid with stride tile_size - overlap.

    With overlap 0 the windows partition the raster (edge windows clamped,
    each pixel covered exactly once); with overlap > 0 every window keeps
    the full tile size and the last row/column shifts inward to the edge.
    """
    if image_height < 1 or image_width < 1:
        raise ValidationError(
            f"image dimensions must be >= 1, got {image_height}x{image_width}"
        )
    if tile_size < 1:
        raise ValidationError(f"tile_size must be >= 1, got {tile_size}")
    if not (0 <= overlap < tile_size):
        raise ValidationError(
            f"overlap must satisfy 0 <= overlap < tile_size, got {overlap}"
        )
    stride = tile_size - overlap
    ys = _starts(image_height, tile_size, stride, overlap == 0)
    xs = _starts(image_width, tile_size, stride, overlap == 0)
    tiles = tuple(
        (x0, y0, min(x0 + tile_size, image_width), min(y0 + tile_size, image_height))
        for y0 in ys
        for x0 in xs
    )
    return TileGrid(image_height, image_width, tile_size, overlap, tiles)


def stitch_labels(grid: TileGrid, per_tile: Iterable[LabelMap]) -> LabelMap:
    """Copy disjoint per-window label maps onto the full canvas."""
    if grid.overlap != 0:
        raise ValidationError(
            "stitch_labels requires overlap == 0; use stitch_probs for overlapping grids"
        )
    canvas = np.full((grid.image_height, grid.image_width), IGNORE_INDEX, dtype=np.uint16)
    count = 0
    it = iter(per_tile)
    for window, tile in zip(grid.tiles, it):
        x0, y0, x1, y1 = window
        if tile.labels.shape != (y1 - y0, x1 - x0):
            raise ValidationError(
                f"tile labels shape {tile.labels.shape} != window {window}"
            )
        canvas[y0:y1, x0:x1] = tile.labels
        count += 1
    if count != len(grid.tiles) or next(it, None) is not None:
        raise ValidationError(
            f"grid has {len(grid.tiles)} windows but a different tile count was supplied"
        )
    return LabelMap(canvas)


def stitch_probs(
    grid: TileGrid, per_tile_per_category: Iterable[Sequence[np.ndarray]]
) -> list[np.ndarray]:
    """Max-combine per-tile category map stacks into full-canvas maps.

    Overlapping pixels take the per-pixel max per category, matching the
    pipeline's fusion semantics; labeling then runs on the stitched stack.
    """
    canvases: list[np.ndarray] | None = None
    count = 0
    it = iter(per_tile_per_category)
    for window, stack in zip(grid.tiles, it):
        x0, y0, x1, y1 = window
        if canvases is None:
            canvases = [
                np.zeros((grid.image_height, grid.image_width), dtype=np.float32)
                for _ in range(len(stack))
            ]
        if len(stack) != len(canvases):
            raise ValidationError(
                f"tile has {len(stack)} category maps, expected {len(canvases)}"
            )
        for canvas, tile_map in zip(canvases, stack):
            tile_map = np.asarray(tile_map, dtype=np.float32)
            if tile_map.shape != (y1 - y0, x1 - x0):
                raise ValidationError(
                    f"tile map shape {tile_map.shape} != window {window}"
                )
            region = canvas[y0:y1, x0:x1]
            np.maximum(region, tile_map, out=region)
        count += 1
    if canvases is None or count != len(grid.tiles) or next(it, None) is not None:
        raise ValidationError(
            f"grid has {len(grid.tiles)} windows but a different tile count was supplied"
        )
    return canvases


# --------------------------------------------------------------------------
# Tile manifests: JSON listing of windows plus per-tile bundle paths, so
# out-of-process exporters can fill tiles independently.


@dataclass(frozen=True)
class TileManifest:
    grid: TileGrid
    bundle_paths: tuple[str, ...]  # one per window, relative to the manifest

    def resolved_paths(self, manifest_path: str | Path) -> list[Path]:
        base = Path(manifest_path).parent
        return [base / p for p in self.bundle_paths]


def write_tile_manifest(manifest: TileManifest, path: str | Path) -> None:
    grid = manifest.grid
    obj = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "image_height": grid.image_height,
        "image_width": grid.image_width,
        "tile_size": grid.tile_size,
        "overlap": grid.overlap,
        "tiles": [
            {"x0": x0, "y0": y0, "x1": x1, "y1": y1, "bundle": bundle}
            for (x0, y0, x1, y1), bundle in zip(grid.tiles, manifest.bundle_paths)
        ],
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def read_tile_manifest(path: str | Path) -> TileManifest:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"tile manifest is not valid JSON: {e}") from None
    if not isinstance(obj, dict) or obj.get("format") != MANIFEST_FORMAT:
        raise FormatError(f'tile manifest must declare "format": "{MANIFEST_FORMAT}"')
    if obj.get("version") != MANIFEST_VERSION:
        raise FormatError(f"unsupported tile manifest version {obj.get('version')}")
    try:
        grid = plan_tiles(
            obj["image_height"], obj["image_width"], obj["tile_size"], obj["overlap"]
        )
        entries = obj["tiles"]
        windows = tuple((t["x0"], t["y0"], t["x1"], t["y1"]) for t in entries)
        bundles = tuple(t["bundle"] for t in entries)
    except (KeyError, TypeError) as e:
        raise FormatError(f"tile manifest missing field: {e}") from None
    if windows != grid.tiles:
        raise ValidationError(
            "tile manifest windows do not match the stride rule for its geometry"
        )
    return TileManifest(grid, bundles)


def crop_bundle(bundle, window: Window):
    """Restrict a bundle to a window; presence scores stay as-is (they are
    tile-global) and instances outside the window are dropped."""
    from .interchange import CategoryRecord, HeadBundle, InstanceRecord, PromptRecord

    x0, y0, x1, y1 = window
    if not (0 <= x0 < x1 <= bundle.width and 0 <= y0 < y1 <= bundle.height):
        raise ValidationError(f"window {window} outside bundle {bundle.width}x{bundle.height}")
    categories = []
    for cat in bundle.categories:
        prompts = []
        for p in cat.prompts:
            semantic = None
            if p.semantic_map is not None:
                semantic = np.ascontiguousarray(p.semantic_map[y0:y1, x0:x1])
            instances = []
            for inst in p.instances:
                if inst.bbox is None:
                    vals = np.ascontiguousarray(np.asarray(inst.values)[y0:y1, x0:x1])
                    instances.append(InstanceRecord(inst.confidence, vals, None))
                    continue
                bx0, by0, bx1, by1 = inst.bbox
                ix0, iy0 = max(bx0, x0), max(by0, y0)
                ix1, iy1 = min(bx1, x1), min(by1, y1)
                if ix0 >= ix1 or iy0 >= iy1:
                    continue
                vals = np.ascontiguousarray(
                    np.asarray(inst.values)[iy0 - by0 : iy1 - by0, ix0 - bx0 : ix1 - bx0]
                )
                shifted = (ix0 - x0, iy0 - y0, ix1 - x0, iy1 - y0)
                instances.append(InstanceRecord(inst.confidence, vals, shifted))
            prompts.append(PromptRecord(p.prompt_text, p.presence, semantic, instances))
        categories.append(CategoryRecord(cat.name, prompts))
    return HeadBundle(
        f"{bundle.image_id}[{x0},{y0},{x1},{y1}]", y1 - y0, x1 - x0, categories
    )


def coverage_counts(grid: TileGrid) -> np.ndarray:
    """How many windows cover each pixel; brute-force check helper."""
    counts = np.zeros((grid.image_height, grid.image_width), dtype=np.uint32)
    for x0, y0, x1, y1 in grid.tiles:
        counts[y0:y1, x0:x1] += 1
    return counts


def iter_windows(grid: TileGrid) -> Iterator[Window]:
    yield from grid.tiles
