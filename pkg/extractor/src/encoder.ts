/**
 * Deterministic surrogate encoders for fixed-length frame windows.
 *
 * The nominal contract is a pretrained spatiotemporal encoder that maps 16
 * frames at 224x224 to an 8x14x14 token grid. No pretrained checkpoints ship
 * with this package, so each preset substitutes a fixed, seeded surrogate:
 * frames are box-pooled onto the 14x14 cell grid (any input resolution),
 * consecutive frame pairs form one temporal slot, eight per-cell statistics
 * feed a seeded softsign feature bank at the preset's native width, and
 * presets whose native width differs from the 512 output channels attach a
 * seeded linear map. Every operation is plain IEEE arithmetic (no
 * transcendental kernels), so output bytes are identical across runs and
 * JS engines.
 */

export const GRID_H = 14;
export const GRID_W = 14;
export const CHANNELS = 512;
export const TEMPORAL_PATCH = 2;
const STATS_DIM = 8;
const CELLS = GRID_H * GRID_W;

/** A single decoded frame's luma plane. */
export interface LumaFrame {
  width: number;
  height: number;
  data: Uint8Array;
}

export interface EncoderPreset {
  id: string;
  /** Channel width of the encoder this preset stands in for. */
  nativeDim: number;
  seed: number;
  /** Which published encoder family the surrogate substitutes. */
  description: string;
}

export const PRESETS: Record<string, EncoderPreset> = {
  vitb: {
    id: "vitb",
    nativeDim: 768,
    seed: 0x45c30001,
    description:
      "surrogate for a ViT-B/16 video transformer (native width 768, mapped to 512)",
  },
  swint: {
    id: "swint",
    nativeDim: 1024,
    seed: 0x45c30002,
    description:
      "surrogate for a hierarchical window-attention video transformer (native width 1024, mapped to 512)",
  },
  r2plus1d: {
    id: "r2plus1d",
    nativeDim: 512,
    seed: 0x45c30003,
    description:
      "surrogate for a factorized 3D convolutional encoder (native width 512, no output map)",
  },
};

export function getPreset(id: string): EncoderPreset {
  const preset = PRESETS[id];
  if (!preset) {
    throw new Error(`unknown preset '${id}'; known: ${Object.keys(PRESETS).join(", ")}`);
  }
  return preset;
}

/** Standard 32-bit mixing PRNG; uniform in [0, 1). */
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let z = state;
    z = Math.imul(z ^ (z >>> 15), z | 1);
    z ^= z + Math.imul(z ^ (z >>> 7), z | 61);
    return ((z ^ (z >>> 14)) >>> 0) / 4294967296;
  };
}

interface PresetWeights {
  bankW: Float64Array; // [nativeDim, STATS_DIM]
  bankB: Float64Array; // [nativeDim]
  mapW: Float64Array | null; // [CHANNELS, nativeDim], null when nativeDim == CHANNELS
  mapB: Float64Array | null; // [CHANNELS]
}

const weightCache = new Map<string, PresetWeights>();

function uniformArray(next: () => number, n: number, scale: number): Float64Array {
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) out[i] = (next() * 2 - 1) * scale;
  return out;
}

function presetWeights(preset: EncoderPreset): PresetWeights {
  const cached = weightCache.get(preset.id);
  if (cached) return cached;
  const next = mulberry32(preset.seed);
  const bankW = uniformArray(next, preset.nativeDim * STATS_DIM, Math.sqrt(3 / STATS_DIM));
  const bankB = uniformArray(next, preset.nativeDim, 0.1);
  let mapW: Float64Array | null = null;
  let mapB: Float64Array | null = null;
  if (preset.nativeDim !== CHANNELS) {
    mapW = uniformArray(next, CHANNELS * preset.nativeDim, Math.sqrt(3 / preset.nativeDim));
    mapB = uniformArray(next, CHANNELS, 0.1);
  }
  const weights = { bankW, bankB, mapW, mapB };
  weightCache.set(preset.id, weights);
  return weights;
}

/** Box-pool a luma plane onto the cell grid; returns per-cell means in [0, 1]. */
function poolCells(frame: LumaFrame): Float64Array {
  const { width, height, data } = frame;
  const out = new Float64Array(CELLS);
  for (let gi = 0; gi < GRID_H; gi++) {
    let r0 = Math.min(Math.floor((gi * height) / GRID_H), height - 1);
    let r1 = Math.max(Math.min(Math.floor(((gi + 1) * height) / GRID_H), height), r0 + 1);
    for (let gj = 0; gj < GRID_W; gj++) {
      let c0 = Math.min(Math.floor((gj * width) / GRID_W), width - 1);
      let c1 = Math.max(Math.min(Math.floor(((gj + 1) * width) / GRID_W), width), c0 + 1);
      let acc = 0;
      for (let r = r0; r < r1; r++) {
        const row = r * width;
        for (let c = c0; c < c1; c++) acc += data[row + c];
      }
      out[gi * GRID_W + gj] = acc / ((r1 - r0) * (c1 - c0) * 255);
    }
  }
  return out;
}

function softsign(x: number): number {
  return x / (1 + Math.abs(x));
}

/**
 * Encode one window of sampled frames into a [tt, 14, 14, 512] token grid,
 * returned flat in t-major order. Consecutive frame pairs form one temporal
 * slot, so the frame count must be even; tt = frames/2.
 */
export function encodeWindow(frames: LumaFrame[], preset: EncoderPreset): Float32Array {
  if (frames.length < TEMPORAL_PATCH || frames.length % TEMPORAL_PATCH !== 0) {
    throw new Error(
      `window must hold a positive multiple of ${TEMPORAL_PATCH} frames, got ${frames.length}`
    );
  }
  const { width, height } = frames[0];
  for (const f of frames) {
    if (f.width !== width || f.height !== height) {
      throw new Error("all frames in a window must share one geometry");
    }
    if (f.data.length !== width * height) {
      throw new Error(`luma plane has ${f.data.length} bytes for ${width}x${height}`);
    }
  }
  const { bankW, bankB, mapW, mapB } = presetWeights(preset);
  const native = preset.nativeDim;
  const tt = frames.length / TEMPORAL_PATCH;
  const out = new Float32Array(tt * CELLS * CHANNELS);
  const stats = new Float64Array(STATS_DIM);
  const bank = new Float64Array(native);

  for (let t = 0; t < tt; t++) {
    const a = poolCells(frames[TEMPORAL_PATCH * t]);
    const b = poolCells(frames[TEMPORAL_PATCH * t + 1]);
    let meanA = 0;
    for (let i = 0; i < CELLS; i++) meanA += a[i];
    meanA /= CELLS;
    const tpos = tt > 1 ? t / (tt - 1) - 0.5 : 0;

    for (let gi = 0; gi < GRID_H; gi++) {
      for (let gj = 0; gj < GRID_W; gj++) {
        const cell = gi * GRID_W + gj;
        // central differences on the pooled grid, edges clamped
        const left = a[gi * GRID_W + Math.max(gj - 1, 0)];
        const right = a[gi * GRID_W + Math.min(gj + 1, GRID_W - 1)];
        const up = a[Math.max(gi - 1, 0) * GRID_W + gj];
        const down = a[Math.min(gi + 1, GRID_H - 1) * GRID_W + gj];
        stats[0] = a[cell];
        stats[1] = b[cell];
        stats[2] = b[cell] - a[cell];
        stats[3] = Math.abs(b[cell] - a[cell]);
        stats[4] = (right - left) / 2;
        stats[5] = (down - up) / 2;
        stats[6] = a[cell] - meanA;
        stats[7] = tpos;

        for (let j = 0; j < native; j++) {
          const row = j * STATS_DIM;
          let acc = bankB[j];
          for (let k = 0; k < STATS_DIM; k++) acc += bankW[row + k] * stats[k];
          bank[j] = softsign(acc);
        }
        // Float32Array assignment quantizes the float64 accumulators
        const base = (t * CELLS + cell) * CHANNELS;
        if (mapW === null) {
          for (let c = 0; c < CHANNELS; c++) out[base + c] = bank[c];
        } else {
          for (let c = 0; c < CHANNELS; c++) {
            const row = c * native;
            let acc = (mapB as Float64Array)[c];
            for (let j = 0; j < native; j++) acc += mapW[row + j] * bank[j];
            out[base + c] = acc;
          }
        }
      }
    }
  }
  return out;
}
