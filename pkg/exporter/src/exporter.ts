/**
 * Tile export: run every (category, prompt) through the model backend and
 * serialize the heads into one SOV3 bundle per window, plus the tile
 * manifest the engine fuses from.
 *
 * Writes are atomic (temp file + rename) and manifest runs resume: a
 * window whose bundle already exists and parses is skipped, so a partial
 * failure only recomputes what is missing.
 */

import { mkdirSync, renameSync, writeFileSync, readFileSync, existsSync } from "node:fs";
import * as path from "node:path";

import type { HeadOutputs, ModelBackend, TileRef } from "./backend.js";
import { windowSize } from "./backend.js";
import {
  BundleFormatError,
  BundleValidationError,
  type CategoryRecord,
  type HeadBundle,
  type InstanceRecord,
  parseBundle,
  serializeBundle,
} from "./sov3.js";
import { manifestJson, planTiles, type TileGrid, type Window } from "./tiling.js";
import type { Vocabulary } from "./vocabulary.js";

/** Instance values at or below this outside a tight box are dropped to the
 * implicit zero of bbox-cropped storage. */
export const CROP_EPSILON = 1e-4;

/** Crop when the tight box covers at most this fraction of the tile. */
const CROP_AREA_FRACTION = 0.5;

export interface ExportJob {
  imageId: string;
  imageHeight: number;
  imageWidth: number;
  vocabulary: Vocabulary;
  outDir: string;
  tileSize?: number;
  overlap?: number;
  /** Parallel tile exports; model servers bound this by device memory. */
  concurrency?: number;
}

export interface ExportResult {
  manifestPath: string;
  classTablePath?: string;
  written: string[];
  skipped: string[];
}

export class ExportError extends Error {
  constructor(message: string, readonly tileId?: string) {
    super(tileId ? `${tileId}: ${message}` : message);
  }
}

/** Tight bbox of values > CROP_EPSILON; null when everything is ~zero. */
export function tightBbox(
  values: Float32Array,
  height: number,
  width: number
): Window | null {
  let x0 = width,
    y0 = height,
    x1 = -1,
    y1 = -1;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      if (values[y * width + x]! > CROP_EPSILON) {
        if (x < x0) x0 = x;
        if (x > x1) x1 = x;
        if (y < y0) y0 = y;
        if (y > y1) y1 = y;
      }
    }
  }
  if (x1 < 0) return null;
  return [x0, y0, x1 + 1, y1 + 1];
}

/** Store small-support masks bbox-cropped; keep broad masks dense. */
export function encodeInstance(
  confidence: number,
  values: Float32Array,
  height: number,
  width: number
): InstanceRecord {
  const box = tightBbox(values, height, width);
  if (box === null) {
    // no signal anywhere: an empty crop is the cheapest faithful encoding
    return { confidence, bbox: [0, 0, 0, 0], values: new Float32Array(0) };
  }
  const [x0, y0, x1, y1] = box;
  const area = (x1 - x0) * (y1 - y0);
  if (area > CROP_AREA_FRACTION * height * width) {
    return { confidence, bbox: null, values };
  }
  const crop = new Float32Array(area);
  for (let y = y0; y < y1; y++) {
    for (let x = x0; x < x1; x++) {
      crop[(y - y0) * (x1 - x0) + (x - x0)] = values[y * width + x]!;
    }
  }
  return { confidence, bbox: box, values: crop };
}

function promptRecord(
  heads: HeadOutputs,
  promptText: string,
  height: number,
  width: number,
  tileId: string
) {
  if (heads.semanticMap && heads.semanticMap.length !== height * width) {
    throw new ExportError(
      `backend returned a ${heads.semanticMap.length}-value semantic map for a ` +
        `${height}x${width} window; upsample head outputs to tile resolution`,
      tileId
    );
  }
  const instances = heads.instances.map((inst) => {
    if (inst.bbox !== null) return inst; // backend already cropped
    if (inst.values.length !== height * width) {
      throw new ExportError(
        `backend returned a ${inst.values.length}-value instance map for a ` +
          `${height}x${width} window`,
        tileId
      );
    }
    return encodeInstance(inst.confidence, inst.values, height, width);
  });
  return { promptText, presence: heads.presence, semanticMap: heads.semanticMap, instances };
}

export async function exportTile(
  backend: ModelBackend,
  tile: TileRef,
  vocabulary: Vocabulary,
  outPath: string
): Promise<{ path: string; bytes: number }> {
  const { height, width } = windowSize(tile.window);
  const tileId = `${tile.imageId}[${tile.window.join(",")}]`;
  const categories: CategoryRecord[] = [];
  for (const entry of vocabulary) {
    const prompts = [];
    for (const text of entry.prompts) {
      const heads = await backend.predictHeads(tile, text);
      prompts.push(promptRecord(heads, text, height, width, tileId));
    }
    categories.push({ name: entry.category, prompts });
  }
  const bundle: HeadBundle = { imageId: tileId, height, width, categories };
  const data = serializeBundle(bundle);
  atomicWrite(outPath, data);
  return { path: outPath, bytes: data.length };
}

function atomicWrite(dest: string, data: Buffer | string): void {
  mkdirSync(path.dirname(dest), { recursive: true });
  const tmp = `${dest}.tmp-${process.pid}`;
  writeFileSync(tmp, data);
  renameSync(tmp, dest);
}

function bundleIsComplete(filePath: string): boolean {
  if (!existsSync(filePath)) return false;
  try {
    parseBundle(readFileSync(filePath));
    return true;
  } catch (e) {
    if (e instanceof BundleFormatError || e instanceof BundleValidationError) {
      return false; // half-written or stale: regenerate
    }
    throw e;
  }
}

async function mapLimit<T, R>(
  items: T[],
  limit: number,
  fn: (item: T, index: number) => Promise<R>
): Promise<R[]> {
  const out = new Array<R>(items.length);
  let next = 0;
  async function worker(): Promise<void> {
    for (;;) {
      const i = next++;
      if (i >= items.length) return;
      out[i] = await fn(items[i]!, i);
    }
  }
  const workers = Array.from({ length: Math.max(1, Math.min(limit, items.length)) }, worker);
  await Promise.all(workers);
  return out;
}

export function tileBundleName(index: number): string {
  return `tiles/tile_${String(index).padStart(5, "0")}.sov3`;
}

export async function exportManifest(
  backend: ModelBackend,
  job: ExportJob
): Promise<ExportResult> {
  const grid: TileGrid = planTiles(
    job.imageHeight,
    job.imageWidth,
    job.tileSize ?? undefined,
    job.overlap ?? 0
  );
  const bundlePaths = grid.tiles.map((_, i) => tileBundleName(i));
  const written: string[] = [];
  const skipped: string[] = [];

  await mapLimit(grid.tiles, job.concurrency ?? 2, async (window, i) => {
    const rel = bundlePaths[i]!;
    const dest = path.join(job.outDir, rel);
    if (bundleIsComplete(dest)) {
      skipped.push(rel);
      return;
    }
    try {
      await exportTile(backend, { imageId: job.imageId, window }, job.vocabulary, dest);
    } catch (e) {
      throw e instanceof ExportError
        ? e
        : new ExportError((e as Error).message, `${job.imageId}[${window.join(",")}]`);
    }
    written.push(rel);
  });

  const manifestPath = path.join(job.outDir, "manifest.json");
  atomicWrite(manifestPath, manifestJson({ grid, bundlePaths }));
  return { manifestPath, written: written.sort(), skipped: skipped.sort() };
}
