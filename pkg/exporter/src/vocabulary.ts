/**
 * Vocabulary files: `{ "category": ["prompt", ...], ... }`, UTF-8 JSON.
 * Category order follows the JSON key order; prompt order is preserved.
 */

import { readFileSync } from "node:fs";

export interface VocabularyEntry {
  category: string;
  prompts: string[];
}

export type Vocabulary = VocabularyEntry[];

export class VocabularyError extends Error {}

export function parseVocabulary(text: string): Vocabulary {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch (e) {
    throw new VocabularyError(`vocabulary is not valid JSON: ${(e as Error).message}`);
  }
  if (obj === null || typeof obj !== "object" || Array.isArray(obj)) {
    throw new VocabularyError("vocabulary must be an object of category -> prompt list");
  }
  const entries = Object.entries(obj as Record<string, unknown>);
  if (entries.length === 0) throw new VocabularyError("vocabulary must not be empty");
  return entries.map(([category, prompts]) => {
    if (
      !Array.isArray(prompts) ||
      prompts.length === 0 ||
      !prompts.every((p) => typeof p === "string")
    ) {
      throw new VocabularyError(`category ${category}: prompts must be a non-empty string list`);
    }
    if (new Set(prompts).size !== prompts.length) {
      throw new VocabularyError(`category ${category}: duplicate prompt texts`);
    }
    return { category, prompts: prompts as string[] };
  });
}

export function loadVocabulary(path: string): Vocabulary {
  return parseVocabulary(readFileSync(path, "utf-8"));
}

/** Class table JSON for the engine: vocabulary categories plus an
 * optional trailing background entry. */
export function classTableJson(vocab: Vocabulary, withBackground: boolean): string {
  const classes = vocab.map((v) => v.category);
  let backgroundIndex: number | null = null;
  if (withBackground) {
    backgroundIndex = classes.length;
    classes.push("background");
  }
  return JSON.stringify({ classes, background_index: backgroundIndex }, null, 2) + "\n";
}
