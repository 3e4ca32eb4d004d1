/**
 * SOV3 container writer/reader.
 *
 * Byte-compatible with the engine's interchange format: little-endian
 * integers, float32 payloads, row-major top-left origin. The writer
 * validates everything the engine's reader would reject, so an exported
 * file either fails loudly here or passes `ovfuse inspect` with zero
 * warnings.
 */

import * as os from "node:os";

export const SOV3_MAGIC = Buffer.from("SOV3", "ascii");
export const FORMAT_VERSION = 1;
export const ENCODING_DENSE = 0;
export const ENCODING_BBOX = 1;

/** Exporter rounding tolerance shared with the engine. */
export const PROB_SLACK = 1e-6;

export type BBox = [x0: number, y0: number, x1: number, y1: number];

export interface InstanceRecord {
  confidence: number;
  /** Dense (height x width) or cropped to bbox, row-major. */
  values: Float32Array;
  bbox: BBox | null;
}

export interface PromptRecord {
  promptText: string;
  presence: number;
  semanticMap: Float32Array | null;
  instances: InstanceRecord[];
}

export interface CategoryRecord {
  name: string;
  prompts: PromptRecord[];
}

export interface HeadBundle {
  imageId: string;
  height: number;
  width: number;
  categories: CategoryRecord[];
}

export class BundleValidationError extends Error {}
export class BundleFormatError extends Error {}

if (os.endianness() !== "LE") {
  // Float32Array.buffer is written raw; every supported Node target is LE
  throw new Error("sov3-exporter requires a little-endian platform");
}

function checkProbScalar(x: number, where: string): number {
  if (Number.isNaN(x)) throw new BundleValidationError(`${where}: NaN probability`);
  if (x < -PROB_SLACK || x > 1 + PROB_SLACK) {
    throw new BundleValidationError(`${where}: value out of [0,1]: ${x}`);
  }
  return Math.fround(Math.min(Math.max(x, 0), 1));
}

function checkProbArray(a: Float32Array, where: string): Float32Array {
  let clamp = false;
  for (let i = 0; i < a.length; i++) {
    const v = a[i]!;
    if (Number.isNaN(v)) throw new BundleValidationError(`${where}: NaN probability`);
    if (v < -PROB_SLACK || v > 1 + PROB_SLACK) {
      throw new BundleValidationError(`${where}: value out of [0,1]: ${v}`);
    }
    if (v < 0 || v > 1) clamp = true;
  }
  if (!clamp) return a;
  const out = new Float32Array(a.length);
  for (let i = 0; i < a.length; i++) out[i] = Math.min(Math.max(a[i]!, 0), 1);
  return out;
}

export function validateBundle(b: HeadBundle): void {
  if (b.height < 1 || b.width < 1) {
    throw new BundleValidationError(`bundle dimensions must be >= 1, got ${b.height}x${b.width}`);
  }
  const seen = new Set<string>();
  b.categories.forEach((cat, ci) => {
    if (seen.has(cat.name)) {
      throw new BundleValidationError(`duplicate category name: ${cat.name}`);
    }
    seen.add(cat.name);
    const where = `categories[${ci}] (${cat.name})`;
    if (cat.prompts.length < 1) {
      throw new BundleValidationError(`${where}: category needs >= 1 prompt`);
    }
    const texts = new Set<string>();
    cat.prompts.forEach((p, pi) => {
      if (texts.has(p.promptText)) {
        throw new BundleValidationError(`${where}: duplicate prompt text ${p.promptText}`);
      }
      texts.add(p.promptText);
      const pwhere = `${where}.prompts[${pi}]`;
      checkProbScalar(p.presence, `${pwhere}.presence`);
      if (p.semanticMap && p.semanticMap.length !== b.height * b.width) {
        throw new BundleValidationError(
          `${pwhere}.semantic_map: ${p.semanticMap.length} values for ${b.height}x${b.width}`
        );
      }
      if (p.semanticMap) checkProbArray(p.semanticMap, `${pwhere}.semantic_map`);
      p.instances.forEach((inst, ii) => {
        const iwhere = `${pwhere}.instances[${ii}]`;
        checkProbScalar(inst.confidence, `${iwhere}.confidence`);
        let expect: number;
        if (inst.bbox === null) {
          expect = b.height * b.width;
        } else {
          const [x0, y0, x1, y1] = inst.bbox;
          if (!(0 <= x0 && x0 <= x1 && x1 <= b.width && 0 <= y0 && y0 <= y1 && y1 <= b.height)) {
            throw new BundleValidationError(
              `${iwhere}.bbox: [${inst.bbox}] outside ${b.width}x${b.height} image`
            );
          }
          expect = (x1 - x0) * (y1 - y0);
        }
        if (inst.values.length !== expect) {
          throw new BundleValidationError(
            `${iwhere}.values: ${inst.values.length} values, expected ${expect}`
          );
        }
        checkProbArray(inst.values, `${iwhere}.values`);
      });
    });
  });
}

class ByteWriter {
  private chunks: Buffer[] = [];
  bytes = 0;

  push(buf: Buffer): void {
    this.chunks.push(buf);
    this.bytes += buf.length;
  }

  u8(v: number): void {
    this.push(Buffer.from([v]));
  }

  u16(v: number): void {
    const b = Buffer.allocUnsafe(2);
    b.writeUInt16LE(v);
    this.push(b);
  }

  u32(v: number): void {
    const b = Buffer.allocUnsafe(4);
    b.writeUInt32LE(v);
    this.push(b);
  }

  f32(v: number): void {
    const b = Buffer.allocUnsafe(4);
    b.writeFloatLE(v);
    this.push(b);
  }

  str(s: string): void {
    const raw = Buffer.from(s, "utf-8");
    this.u32(raw.length);
    this.push(raw);
  }

  f32Array(a: Float32Array): void {
    this.push(Buffer.from(a.buffer, a.byteOffset, a.byteLength));
  }

  concat(): Buffer {
    return Buffer.concat(this.chunks);
  }
}

export function serializeBundle(bundle: HeadBundle): Buffer {
  validateBundle(bundle);
  const w = new ByteWriter();
  w.push(SOV3_MAGIC);
  w.u16(FORMAT_VERSION);
  w.u16(0); // flags
  w.str(bundle.imageId);
  w.u32(bundle.height);
  w.u32(bundle.width);
  w.u16(bundle.categories.length);
  for (const cat of bundle.categories) {
    w.str(cat.name);
    w.u16(cat.prompts.length);
    for (const p of cat.prompts) {
      w.str(p.promptText);
      w.f32(checkProbScalar(p.presence, "presence"));
      if (p.semanticMap === null) {
        w.u8(0);
      } else {
        w.u8(1);
        w.f32Array(checkProbArray(p.semanticMap, "semantic_map"));
      }
      w.u32(p.instances.length);
      for (const inst of p.instances) {
        w.f32(checkProbScalar(inst.confidence, "confidence"));
        if (inst.bbox === null) {
          w.u8(ENCODING_DENSE);
        } else {
          w.u8(ENCODING_BBOX);
          for (const v of inst.bbox) w.u32(v);
        }
        w.f32Array(checkProbArray(inst.values, "values"));
      }
    }
  }
  return w.concat();
}

class ByteReader {
  off = 0;

  constructor(private data: Buffer) {}

  private need(n: number, what: string): void {
    if (this.off + n > this.data.length) {
      throw new BundleFormatError(
        `truncated stream: expected ${n} bytes for ${what}, received ${this.data.length - this.off}`
      );
    }
  }

  take(n: number, what: string): Buffer {
    this.need(n, what);
    const out = this.data.subarray(this.off, this.off + n);
    this.off += n;
    return out;
  }

  u8(what: string): number {
    return this.take(1, what)[0]!;
  }

  u16(what: string): number {
    return this.take(2, what).readUInt16LE();
  }

  u32(what: string): number {
    return this.take(4, what).readUInt32LE();
  }

  f32(what: string): number {
    return this.take(4, what).readFloatLE();
  }

  str(what: string): string {
    const len = this.u32(`${what} length`);
    return this.take(len, what).toString("utf-8");
  }

  f32Array(count: number, what: string): Float32Array {
    const raw = this.take(count * 4, what);
    const copy = Buffer.from(raw); // align + detach from the file buffer
    return new Float32Array(copy.buffer, copy.byteOffset, count);
  }

  done(): boolean {
    return this.off === this.data.length;
  }
}

/** Parse and validate; used for resume checks and self-tests. */
export function parseBundle(data: Buffer): HeadBundle {
  const r = new ByteReader(data);
  if (!r.take(4, "magic").equals(SOV3_MAGIC)) {
    throw new BundleFormatError("bad magic");
  }
  const version = r.u16("version");
  if (version !== FORMAT_VERSION) {
    throw new BundleFormatError(`unsupported format version ${version}`);
  }
  if (r.u16("flags") !== 0) throw new BundleFormatError("unsupported flags");
  const imageId = r.str("image_id");
  const height = r.u32("height");
  const width = r.u32("width");
  const nCat = r.u16("category count");
  const categories: CategoryRecord[] = [];
  for (let ci = 0; ci < nCat; ci++) {
    const name = r.str("category name");
    const nPrompt = r.u16("prompt count");
    const prompts: PromptRecord[] = [];
    for (let pi = 0; pi < nPrompt; pi++) {
      const promptText = r.str("prompt text");
      const presence = r.f32("presence");
      const semFlag = r.u8("semantic flag");
      if (semFlag !== 0 && semFlag !== 1) {
        throw new BundleFormatError(`bad semantic flag ${semFlag}`);
      }
      const semanticMap = semFlag ? r.f32Array(height * width, "semantic map") : null;
      const nInst = r.u32("instance count");
      const instances: InstanceRecord[] = [];
      for (let ii = 0; ii < nInst; ii++) {
        const confidence = r.f32("confidence");
        const enc = r.u8("encoding");
        let bbox: BBox | null = null;
        let count = height * width;
        if (enc === ENCODING_BBOX) {
          bbox = [r.u32("x0"), r.u32("y0"), r.u32("x1"), r.u32("y1")];
          count = (bbox[2] - bbox[0]) * (bbox[3] - bbox[1]);
        } else if (enc !== ENCODING_DENSE) {
          throw new BundleFormatError(`unknown encoding ${enc}`);
        }
        instances.push({ confidence, bbox, values: r.f32Array(count, "values") });
      }
      prompts.push({ promptText, presence, semanticMap, instances });
    }
    categories.push({ name, prompts });
  }
  if (!r.done()) throw new BundleFormatError("trailing garbage after bundle");
  const bundle = { imageId, height, width, categories };
  validateBundle(bundle);
  return bundle;
}
