/**
 * Model backends. The exporter never touches pixels or model weights
 * itself: a backend resolves (image, window, prompt) to the three head
 * outputs, already converted to probabilities and upsampled to window
 * resolution.
 *
 * - HttpModelBackend talks to a model server that holds the checkpoint
 *   and the imagery (the deployment shape for the real segmentation
 *   model).
 * - StubModelBackend produces deterministic synthetic heads from the
 *   documented counter RNG; it stands in wherever weights are
 *   unavailable and anchors the determinism and contract tests.
 */

import { CounterRng, stringTag } from "./rng.js";
import type { BBox, InstanceRecord } from "./sov3.js";
import type { Window } from "./tiling.js";

export interface TileRef {
  imageId: string;
  /** Window in source-image coordinates; head maps must match its size. */
  window: Window;
}

export interface HeadOutputs {
  /** Global probability that the concept appears in this tile. */
  presence: number;
  /** Dense map at window resolution, or null if the head is disabled. */
  semanticMap: Float32Array | null;
  instances: InstanceRecord[];
}

export interface ModelBackend {
  readonly name: string;
  predictHeads(tile: TileRef, promptText: string): Promise<HeadOutputs>;
}

export function windowSize(w: Window): { height: number; width: number } {
  return { height: w[3] - w[1], width: w[2] - w[0] };
}

// ---------------------------------------------------------------------------

export interface StubOptions {
  seed?: number;
  /** Probability that a prompt's concept is "present" in a tile. */
  presentRate?: number;
  maxInstances?: number;
  semanticHead?: boolean;
}

/**
 * Deterministic synthetic heads: per (imageId, window, prompt) the stub
 * decides presence, paints a rectangular concept region into the semantic
 * map, and emits a few sharp instances inside it. Same inputs, same bytes.
 */
export class StubModelBackend implements ModelBackend {
  readonly name = "stub";
  private readonly seed: bigint;
  private readonly presentRate: number;
  private readonly maxInstances: number;
  private readonly semanticHead: boolean;

  constructor(opts: StubOptions = {}) {
    this.seed = BigInt(opts.seed ?? 0);
    this.presentRate = opts.presentRate ?? 0.6;
    this.maxInstances = opts.maxInstances ?? 3;
    this.semanticHead = opts.semanticHead ?? true;
  }

  async predictHeads(tile: TileRef, promptText: string): Promise<HeadOutputs> {
    const [x0, y0] = tile.window;
    const { height, width } = windowSize(tile.window);
    const rng = new CounterRng(this.seed).fork(
      stringTag(tile.imageId),
      BigInt(x0),
      BigInt(y0),
      stringTag(promptText)
    );

    const present = rng.nextF32() < this.presentRate;
    const presence = present ? 0.85 + 0.14 * rng.nextF32() : 0.12 * rng.nextF32();

    const semantic = this.semanticHead ? new Float32Array(height * width) : null;
    if (semantic) {
      for (let i = 0; i < semantic.length; i++) semantic[i] = 0.02 * rng.nextF32();
    }

    const instances: InstanceRecord[] = [];
    if (present) {
      const rw = Math.max(1, rng.nextInt(Math.ceil(width / 4), Math.ceil(width / 2)));
      const rh = Math.max(1, rng.nextInt(Math.ceil(height / 4), Math.ceil(height / 2)));
      const rx = rng.nextInt(0, width - rw);
      const ry = rng.nextInt(0, height - rh);
      if (semantic) {
        const level = 0.7 + 0.25 * rng.nextF32();
        for (let y = ry; y < ry + rh; y++) {
          for (let x = rx; x < rx + rw; x++) {
            semantic[y * width + x] = Math.fround(
              Math.min(1, level + 0.04 * rng.nextF32())
            );
          }
        }
      }
      const n = rng.nextInt(1, Math.max(1, this.maxInstances));
      for (let k = 0; k < n; k++) {
        const iw = Math.max(1, rng.nextInt(1, Math.max(1, rw >> 1)));
        const ih = Math.max(1, rng.nextInt(1, Math.max(1, rh >> 1)));
        const ix = rx + rng.nextInt(0, rw - iw);
        const iy = ry + rng.nextInt(0, rh - ih);
        const values = new Float32Array(height * width);
        const level = 0.8 + 0.18 * rng.nextF32();
        for (let y = iy; y < iy + ih; y++) {
          for (let x = ix; x < ix + iw; x++) {
            values[y * width + x] = Math.fround(Math.min(1, level + 0.02 * rng.nextF32()));
          }
        }
        instances.push({
          confidence: 0.6 + 0.39 * rng.nextF32(),
          bbox: null, // dense; the exporter decides on cropping
          values,
        });
      }
    }
    return { presence, semanticMap: semantic, instances };
  }
}

// ---------------------------------------------------------------------------

export interface HttpBackendOptions {
  baseUrl: string;
  checkpoint?: string;
  device?: string;
  fetchImpl?: typeof fetch;
}

interface WirePrediction {
  presence: number;
  semantic_b64: string | null;
  instances: { confidence: number; bbox: BBox | null; values_b64: string }[];
}

/**
 * Client for a model server exposing
 * `POST /predict {image_id, window, prompt, checkpoint, device}` and
 * answering with base64-encoded float32 payloads. The server owns image
 * decoding, resizing to the model input, and converting logits to
 * probabilities.
 */
export class HttpModelBackend implements ModelBackend {
  readonly name: string;
  private readonly opts: HttpBackendOptions;
  private readonly fetchImpl: typeof fetch;

  constructor(opts: HttpBackendOptions) {
    this.opts = opts;
    this.fetchImpl = opts.fetchImpl ?? fetch;
    this.name = `http:${opts.baseUrl}`;
  }

  async predictHeads(tile: TileRef, promptText: string): Promise<HeadOutputs> {
    const res = await this.fetchImpl(new URL("/predict", this.opts.baseUrl), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        image_id: tile.imageId,
        window: tile.window,
        prompt: promptText,
        checkpoint: this.opts.checkpoint ?? null,
        device: this.opts.device ?? null,
      }),
    });
    if (!res.ok) {
      throw new Error(`model server ${res.status} for ${tile.imageId} ${promptText}`);
    }
    const wire = (await res.json()) as WirePrediction;
    return {
      presence: wire.presence,
      semanticMap: wire.semantic_b64 === null ? null : f32FromBase64(wire.semantic_b64),
      instances: wire.instances.map((i) => ({
        confidence: i.confidence,
        bbox: i.bbox,
        values: f32FromBase64(i.values_b64),
      })),
    };
  }
}

export function f32FromBase64(b64: string): Float32Array {
  const buf = Buffer.from(b64, "base64");
  const copy = Buffer.from(buf); // ensure alignment
  return new Float32Array(copy.buffer, copy.byteOffset, copy.length / 4);
}

export function f32ToBase64(a: Float32Array): string {
  return Buffer.from(a.buffer, a.byteOffset, a.byteLength).toString("base64");
}
