import { describe, expect, it } from "vitest";

import {
  BundleValidationError,
  parseBundle,
  serializeBundle,
  type HeadBundle,
} from "../src/sov3.js";

// emitted by the engine's writer for the identical logical bundle
const GOLDEN_HEX =
  "534f5633010000000600000074696c652d3002000000020000000200080000006275" +
  "696c64696e670100080000006275696c64696e670000603f010000803e0000003f00" +
  "00403f0000803f010000000000203f0101000000000000000200000001000000" +
  "0000003e04000000726f6164010004000000726f61640000803d0000000000";

function goldenBundle(): HeadBundle {
  return {
    imageId: "tile-0",
    height: 2,
    width: 2,
    categories: [
      {
        name: "building",
        prompts: [
          {
            promptText: "building",
            presence: 0.875,
            semanticMap: new Float32Array([0.25, 0.5, 0.75, 1.0]),
            instances: [
              {
                confidence: 0.625,
                bbox: [1, 0, 2, 1],
                values: new Float32Array([0.125]),
              },
            ],
          },
        ],
      },
      {
        name: "road",
        prompts: [
          { promptText: "road", presence: 0.0625, semanticMap: null, instances: [] },
        ],
      },
    ],
  };
}

describe("SOV3 serialization", () => {
  it("emits bytes identical to the engine's writer", () => {
    expect(serializeBundle(goldenBundle()).toString("hex")).toBe(GOLDEN_HEX);
  });

  it("parses its own output back to an equal bundle", () => {
    const bundle = goldenBundle();
    const parsed = parseBundle(serializeBundle(bundle));
    expect(parsed.imageId).toBe(bundle.imageId);
    expect(parsed.height).toBe(2);
    expect(parsed.categories.length).toBe(2);
    expect(parsed.categories[0]!.prompts[0]!.presence).toBe(0.875);
    expect(Array.from(parsed.categories[0]!.prompts[0]!.semanticMap!)).toEqual([
      0.25, 0.5, 0.75, 1.0,
    ]);
    expect(parsed.categories[0]!.prompts[0]!.instances[0]!.bbox).toEqual([1, 0, 2, 1]);
    expect(parsed.categories[1]!.prompts[0]!.semanticMap).toBeNull();
  });

  it("rejects NaN and out-of-range probabilities", () => {
    const bad = goldenBundle();
    bad.categories[0]!.prompts[0]!.presence = Number.NaN;
    expect(() => serializeBundle(bad)).toThrow(BundleValidationError);

    const range = goldenBundle();
    range.categories[0]!.prompts[0]!.semanticMap = new Float32Array([1.5, 0, 0, 0]);
    expect(() => serializeBundle(range)).toThrow(/value out of \[0,1\]/);
  });

  it("clamps values inside the 1e-6 exporter window", () => {
    const soft = goldenBundle();
    soft.categories[0]!.prompts[0]!.semanticMap = new Float32Array([
      1.0000005, 0, 0, -0.0000005,
    ]);
    const parsed = parseBundle(serializeBundle(soft));
    const sem = parsed.categories[0]!.prompts[0]!.semanticMap!;
    expect(sem[0]).toBe(1);
    expect(sem[3]).toBe(0);
  });

  it("rejects wrong-sized maps and out-of-bounds boxes", () => {
    const wrong = goldenBundle();
    wrong.categories[0]!.prompts[0]!.semanticMap = new Float32Array(3);
    expect(() => serializeBundle(wrong)).toThrow(/semantic_map/);

    const box = goldenBundle();
    box.categories[0]!.prompts[0]!.instances[0] = {
      confidence: 0.5,
      bbox: [0, 0, 3, 1],
      values: new Float32Array(3),
    };
    expect(() => serializeBundle(box)).toThrow(/bbox/);
  });

  it("rejects duplicate names, empty prompt lists, truncation, trailing bytes", () => {
    const dup = goldenBundle();
    dup.categories[1]!.name = "building";
    expect(() => serializeBundle(dup)).toThrow(/duplicate/);

    const empty = goldenBundle();
    empty.categories[0]!.prompts = [];
    expect(() => serializeBundle(empty)).toThrow(/prompt/);

    const data = serializeBundle(goldenBundle());
    expect(() => parseBundle(data.subarray(0, data.length - 3))).toThrow(/truncated/);
    expect(() => parseBundle(Buffer.concat([data, Buffer.from([0])]))).toThrow(/trailing/);
    const badMagic = Buffer.from(data);
    badMagic.write("XXXX", 0, "ascii");
    expect(() => parseBundle(badMagic)).toThrow(/magic/);
  });
});
