export {
  VideoClip,
  VideoDecodeError,
  loadVideo,
  parseY4m,
  readPgmSequence,
} from "./video";
export {
  ESCF_MAGIC,
  ESCF_VERSION,
  HEADER_BYTES,
  EscfHeader,
  TokenFile,
  FeatureFileError,
  BadMagicError,
  UnsupportedVersionError,
  GeometryError,
  TruncatedPayloadError,
  packFeatures,
  writeFeatures,
  readFeatures,
} from "./escf";
export {
  CHANNELS,
  GRID_H,
  GRID_W,
  TEMPORAL_PATCH,
  EncoderPreset,
  LumaFrame,
  PRESETS,
  encodeWindow,
  getPreset,
} from "./encoder";
export {
  CLIP_FRAMES,
  ExtractionJob,
  ExtractionResult,
  VideoAnnotation,
  extract,
  extractExemplarClip,
  sampleClipIndices,
} from "./extract";
