/**
 * Minimal export driver:
 *
 *   node dist/cli.js --image-id scene --height 2016 --width 2016 \
 *     --vocab vocab.json --out-dir out [--tile-size 1008] [--overlap 0] \
 *     [--backend stub|http] [--base-url http://...] [--seed 7] \
 *     [--with-class-table]
 */

import { writeFileSync } from "node:fs";
import * as path from "node:path";

import { HttpModelBackend, StubModelBackend, type ModelBackend } from "./backend.js";
import { exportManifest } from "./exporter.js";
import { classTableJson, loadVocabulary } from "./vocabulary.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i]!;
    if (!a.startsWith("--")) throw new Error(`unexpected argument ${a}`);
    const key = a.slice(2);
    if (key === "with-class-table") {
      out.set(key, "true");
    } else {
      const v = argv[++i];
      if (v === undefined) throw new Error(`missing value for --${key}`);
      out.set(key, v);
    }
  }
  return out;
}

function need(args: Map<string, string>, key: string): string {
  const v = args.get(key);
  if (v === undefined) throw new Error(`--${key} is required`);
  return v;
}

export async function main(argv: string[]): Promise<number> {
  const args = parseArgs(argv);
  const vocabulary = loadVocabulary(need(args, "vocab"));
  const backendKind = args.get("backend") ?? "stub";
  let backend: ModelBackend;
  if (backendKind === "stub") {
    backend = new StubModelBackend({ seed: Number(args.get("seed") ?? 0) });
  } else if (backendKind === "http") {
    backend = new HttpModelBackend({
      baseUrl: need(args, "base-url"),
      checkpoint: args.get("checkpoint"),
      device: args.get("device"),
    });
  } else {
    throw new Error(`unknown backend ${backendKind}`);
  }

  const outDir = need(args, "out-dir");
  const result = await exportManifest(backend, {
    imageId: need(args, "image-id"),
    imageHeight: Number(need(args, "height")),
    imageWidth: Number(need(args, "width")),
    vocabulary,
    outDir,
    tileSize: args.has("tile-size") ? Number(args.get("tile-size")) : undefined,
    overlap: args.has("overlap") ? Number(args.get("overlap")) : 0,
    concurrency: args.has("concurrency") ? Number(args.get("concurrency")) : undefined,
  });
  if (args.has("with-class-table")) {
    const p = path.join(outDir, "classes.json");
    writeFileSync(p, classTableJson(vocabulary, true));
    result.classTablePath = p;
  }
  console.log(
    JSON.stringify(
      {
        manifest: result.manifestPath,
        written: result.written.length,
        skipped: result.skipped.length,
        class_table: result.classTablePath ?? null,
      },
      null,
      2
    )
  );
  return 0;
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.js") || entry.endsWith("cli.ts")) {
  main(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      console.error(JSON.stringify({ error: "export", message: (err as Error).message }));
      process.exit(2);
    }
  );
}
