import * as fs from "fs";
import * as path from "path";

import {
  CHANNELS,
  GRID_H,
  GRID_W,
  TEMPORAL_PATCH,
  EncoderPreset,
  LumaFrame,
  encodeWindow,
  getPreset,
} from "./encoder";
import { writeFeatures } from "./escf";
import { VideoClip, loadVideo } from "./video";

/** Frames sampled per exemplar clip, matching one encoder window input. */
export const CLIP_FRAMES = 16;

export interface VideoAnnotation {
  count: number;
  /** [start, end) raw-frame intervals; empty for count-only datasets. */
  repetitions: Array<[number, number]>;
}

export interface ExtractionJob {
  /** Path to a .y4m file or a directory of binary PGM frames. */
  video: string;
  /** Directory receiving <videoId>.escf and <videoId>.json. */
  outDir: string;
  /** Required for frame directories; overrides the container rate otherwise. */
  fps?: number;
  /** Keep every stride-th frame inside each window (default 4). */
  stride?: number;
  /** Raw frames per non-overlapping window (default 64). */
  window?: number;
  /** Encoder preset id (default "vitb"). */
  preset?: string;
  /** Defaults to the video's base name. */
  videoId?: string;
  classLabel?: string;
  /** Copied into the sidecar; omitted means an unannotated count of 0. */
  annotation?: VideoAnnotation;
}

export interface ExtractionResult {
  escfPath: string;
  sidecarPath: string;
  videoId: string;
  windows: number;
  tTokens: number;
  rawFramesUsed: number;
  /** Trailing frames that did not fill a whole window and were dropped. */
  framesDropped: number;
}

interface ResolvedJob {
  clip: VideoClip;
  stride: number;
  window: number;
  preset: EncoderPreset;
  videoId: string;
  classLabel: string;
}

function resolveJob(job: ExtractionJob): ResolvedJob {
  const stride = job.stride ?? 4;
  const window = job.window ?? 64;
  if (!Number.isInteger(stride) || stride < 1) {
    throw new Error(`stride must be a positive integer, got ${stride}`);
  }
  if (!Number.isInteger(window) || window < 1) {
    throw new Error(`window must be a positive integer, got ${window}`);
  }
  if (window % stride !== 0) {
    throw new Error(`window ${window} must be divisible by stride ${stride}`);
  }
  const sampled = window / stride;
  if (sampled % TEMPORAL_PATCH !== 0) {
    throw new Error(
      `window/stride = ${sampled} sampled frames, need a multiple of ${TEMPORAL_PATCH}`
    );
  }
  return {
    clip: loadVideo(job.video, job.fps),
    stride,
    window,
    preset: getPreset(job.preset ?? "vitb"),
    videoId: job.videoId ?? path.basename(job.video).replace(/\.[^.]+$/, ""),
    classLabel: job.classLabel ?? "unknown",
  };
}

function checkAnnotation(ann: VideoAnnotation, rawFrames: number): void {
  if (!Number.isInteger(ann.count) || ann.count < 0) {
    throw new Error(`count must be a non-negative integer, got ${ann.count}`);
  }
  const reps = ann.repetitions;
  if (reps.length > 0 && reps.length !== ann.count) {
    throw new Error(
      `${reps.length} intervals but count=${ann.count}; intervals, when present, must be exhaustive`
    );
  }
  for (const [s, e] of reps) {
    if (!Number.isInteger(s) || !Number.isInteger(e) || s < 0 || s >= e) {
      throw new Error(`degenerate interval [${s}, ${e})`);
    }
    if (e > rawFrames) {
      throw new Error(
        `interval [${s}, ${e}) runs past the ${rawFrames} emitted frames; ` +
          "trim annotations that fall in dropped trailing frames"
      );
    }
  }
  for (let i = 0; i + 1 < reps.length; i++) {
    if (reps[i][0] > reps[i + 1][0]) {
      throw new Error("intervals must be sorted by start frame");
    }
  }
}

function writeSidecar(
  sidecarPath: string,
  videoId: string,
  classLabel: string,
  fps: number,
  ann: VideoAnnotation
): void {
  const record = {
    video_id: videoId,
    class_label: classLabel,
    fps,
    count: ann.count,
    repetitions: ann.repetitions.map(([s, e]) => [s, e]),
  };
  fs.writeFileSync(sidecarPath, JSON.stringify(record, null, 1) + "\n");
}

function frameAt(clip: VideoClip, index: number): LumaFrame {
  return { width: clip.width, height: clip.height, data: clip.frames[index] };
}

/**
 * Decode a video, encode every whole window, and emit an ESCF token file
 * plus its annotation sidecar. Trailing frames short of a full window are
 * dropped so the header's raw frame count stays a whole number of windows.
 */
export function extract(job: ExtractionJob): ExtractionResult {
  const { clip, stride, window, preset, videoId, classLabel } = resolveJob(job);
  const windows = Math.floor(clip.frames.length / window);
  if (windows < 1) {
    throw new Error(
      `video has ${clip.frames.length} frames, shorter than one ${window}-frame window`
    );
  }
  const rawFramesUsed = windows * window;
  const framesDropped = clip.frames.length - rawFramesUsed;
  const ttPerWindow = window / stride / TEMPORAL_PATCH;
  const tTokens = windows * ttPerWindow;

  const annotation = job.annotation ?? { count: 0, repetitions: [] };
  checkAnnotation(annotation, rawFramesUsed);

  const payload = new Float32Array(tTokens * GRID_H * GRID_W * CHANNELS);
  const perWindow = ttPerWindow * GRID_H * GRID_W * CHANNELS;
  for (let w = 0; w < windows; w++) {
    const sampled: LumaFrame[] = [];
    for (let k = 0; k < window / stride; k++) {
      sampled.push(frameAt(clip, w * window + k * stride));
    }
    payload.set(encodeWindow(sampled, preset), w * perWindow);
  }

  fs.mkdirSync(job.outDir, { recursive: true });
  const escfPath = path.join(job.outDir, `${videoId}.escf`);
  const sidecarPath = path.join(job.outDir, `${videoId}.json`);
  writeFeatures(
    escfPath,
    {
      tTokens,
      height: GRID_H,
      width: GRID_W,
      channels: CHANNELS,
      rawFrameCount: rawFramesUsed,
      framesPerWindow: window,
    },
    payload
  );
  writeSidecar(sidecarPath, videoId, classLabel, clip.fps, annotation);
  return { escfPath, sidecarPath, videoId, windows, tTokens, rawFramesUsed, framesDropped };
}

/**
 * Indices of ``CLIP_FRAMES`` frames sampled uniformly from [start, end).
 * A 16-frame interval comes back whole; a 160-frame interval yields every
 * 10th frame. Intervals shorter than 2 frames are rejected.
 */
export function sampleClipIndices(start: number, end: number): number[] {
  if (!Number.isInteger(start) || !Number.isInteger(end)) {
    throw new Error(`interval bounds must be integers, got [${start}, ${end})`);
  }
  const span = end - start;
  if (span < 2) {
    throw new Error(`interval [${start}, ${end}) is shorter than 2 frames`);
  }
  const indices: number[] = [];
  for (let i = 0; i < CLIP_FRAMES; i++) {
    indices.push(start + Math.floor((i * span) / CLIP_FRAMES));
  }
  return indices;
}

/**
 * Cut one annotated repetition out of a video as a single-window exemplar:
 * 16 uniformly sampled frames from ``interval`` are encoded as one window
 * and written as <videoId>_exemplar.escf. The emitted container describes
 * the resampled clip itself (16 raw frames, one 16-frame window), with the
 * sidecar's fps scaled to the resampled rate and one repetition spanning
 * the whole clip.
 */
export function extractExemplarClip(
  job: ExtractionJob,
  interval: [number, number]
): ExtractionResult {
  const { clip, preset, videoId, classLabel } = resolveJob(job);
  const [start, end] = interval;
  const indices = sampleClipIndices(start, end);
  if (start < 0 || end > clip.frames.length) {
    throw new Error(
      `interval [${start}, ${end}) outside the video's ${clip.frames.length} frames`
    );
  }
  const payload = encodeWindow(
    indices.map(i => frameAt(clip, i)),
    preset
  );
  const clipId = `${videoId}_exemplar`;
  fs.mkdirSync(job.outDir, { recursive: true });
  const escfPath = path.join(job.outDir, `${clipId}.escf`);
  const sidecarPath = path.join(job.outDir, `${clipId}.json`);
  const tTokens = CLIP_FRAMES / TEMPORAL_PATCH;
  writeFeatures(
    escfPath,
    {
      tTokens,
      height: GRID_H,
      width: GRID_W,
      channels: CHANNELS,
      rawFrameCount: CLIP_FRAMES,
      framesPerWindow: CLIP_FRAMES,
    },
    payload
  );
  writeSidecar(sidecarPath, clipId, classLabel, (clip.fps * CLIP_FRAMES) / (end - start), {
    count: 1,
    repetitions: [[0, CLIP_FRAMES]],
  });
  return {
    escfPath,
    sidecarPath,
    videoId: clipId,
    windows: 1,
    tTokens,
    rawFramesUsed: CLIP_FRAMES,
    framesDropped: 0,
  };
}
