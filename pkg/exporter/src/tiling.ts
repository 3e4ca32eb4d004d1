/**
 * Window planning and tile manifests, mirroring the engine's stride rule:
 * zero overlap partitions the raster with a clamped edge window; positive
 * overlap keeps full-size windows and shifts the last row/column inward.
 * The manifest JSON is the engine's own format, so `ovfuse fuse -i
 * manifest.json` consumes exporter output directly.
 */

export type Window = [x0: number, y0: number, x1: number, y1: number];

export const DEFAULT_TILE_SIZE = 1008;
export const MANIFEST_FORMAT = "ovfuse-tiles";
export const MANIFEST_VERSION = 1;

export interface TileGrid {
  imageHeight: number;
  imageWidth: number;
  tileSize: number;
  overlap: number;
  tiles: Window[];
}

function starts(extent: number, tile: number, stride: number, exactCover: boolean): number[] {
  if (extent <= tile) return [0];
  if (exactCover) {
    const xs: number[] = [];
    for (let x = 0; x < extent; x += tile) xs.push(x);
    return xs;
  }
  const xs: number[] = [];
  for (let x = 0; x + tile <= extent; x += stride) xs.push(x);
  if (xs[xs.length - 1] !== extent - tile) xs.push(extent - tile);
  return xs;
}

export function planTiles(
  imageHeight: number,
  imageWidth: number,
  tileSize: number = DEFAULT_TILE_SIZE,
  overlap = 0
): TileGrid {
  if (imageHeight < 1 || imageWidth < 1) {
    throw new RangeError(`image dimensions must be >= 1, got ${imageHeight}x${imageWidth}`);
  }
  if (tileSize < 1) throw new RangeError(`tile_size must be >= 1, got ${tileSize}`);
  if (overlap < 0 || overlap >= tileSize) {
    throw new RangeError(`overlap must satisfy 0 <= overlap < tile_size, got ${overlap}`);
  }
  const stride = tileSize - overlap;
  const ys = starts(imageHeight, tileSize, stride, overlap === 0);
  const xs = starts(imageWidth, tileSize, stride, overlap === 0);
  const tiles: Window[] = [];
  for (const y0 of ys) {
    for (const x0 of xs) {
      tiles.push([x0, y0, Math.min(x0 + tileSize, imageWidth), Math.min(y0 + tileSize, imageHeight)]);
    }
  }
  return { imageHeight, imageWidth, tileSize, overlap, tiles };
}

export interface TileManifest {
  grid: TileGrid;
  bundlePaths: string[]; // relative to the manifest file
}

export function manifestJson(manifest: TileManifest): string {
  const { grid } = manifest;
  const obj = {
    format: MANIFEST_FORMAT,
    version: MANIFEST_VERSION,
    image_height: grid.imageHeight,
    image_width: grid.imageWidth,
    tile_size: grid.tileSize,
    overlap: grid.overlap,
    tiles: grid.tiles.map(([x0, y0, x1, y1], i) => ({
      x0,
      y0,
      x1,
      y1,
      bundle: manifest.bundlePaths[i],
    })),
  };
  return JSON.stringify(obj, null, 2) + "\n";
}
