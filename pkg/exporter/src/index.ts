export {
  CounterRng,
  deriveSeed,
  mix64,
  stringTag,
} from "./rng.js";
export {
  BundleFormatError,
  BundleValidationError,
  ENCODING_BBOX,
  ENCODING_DENSE,
  FORMAT_VERSION,
  parseBundle,
  serializeBundle,
  validateBundle,
  type BBox,
  type CategoryRecord,
  type HeadBundle,
  type InstanceRecord,
  type PromptRecord,
} from "./sov3.js";
export {
  DEFAULT_TILE_SIZE,
  manifestJson,
  planTiles,
  type TileGrid,
  type TileManifest,
  type Window,
} from "./tiling.js";
export {
  classTableJson,
  loadVocabulary,
  parseVocabulary,
  VocabularyError,
  type Vocabulary,
  type VocabularyEntry,
} from "./vocabulary.js";
export {
  f32FromBase64,
  f32ToBase64,
  HttpModelBackend,
  StubModelBackend,
  windowSize,
  type HeadOutputs,
  type ModelBackend,
  type TileRef,
} from "./backend.js";
export {
  CROP_EPSILON,
  encodeInstance,
  ExportError,
  exportManifest,
  exportTile,
  tightBbox,
  tileBundleName,
  type ExportJob,
  type ExportResult,
} from "./exporter.js";
