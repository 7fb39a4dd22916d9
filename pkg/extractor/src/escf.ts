import * as fs from "fs";

/**
 * ESCF v1 container: 4-byte magic, then seven little-endian uint32 fields
 * (version, T', H', W', C, raw frame count R, frames per window), then
 * T'*H'*W'*C little-endian float32 token values in T'-major row order.
 * This mirrors the reader in the counting library byte for byte.
 */

export const ESCF_MAGIC = "ESCF";
export const ESCF_VERSION = 1;
export const HEADER_BYTES = 4 + 7 * 4;

export interface EscfHeader {
  tTokens: number;
  height: number;
  width: number;
  channels: number;
  rawFrameCount: number;
  framesPerWindow: number;
}

export interface TokenFile extends EscfHeader {
  /** Flat [T'*H'*W', C] payload, T'-major. */
  payload: Float32Array;
}

export class FeatureFileError extends Error {}
export class BadMagicError extends FeatureFileError {}
export class UnsupportedVersionError extends FeatureFileError {}
export class GeometryError extends FeatureFileError {}
export class TruncatedPayloadError extends FeatureFileError {}

function checkHeader(h: EscfHeader): void {
  const fields: Array<[string, number]> = [
    ["T'", h.tTokens],
    ["H'", h.height],
    ["W'", h.width],
    ["C", h.channels],
    ["raw frame count", h.rawFrameCount],
    ["frames per window", h.framesPerWindow],
  ];
  for (const [name, value] of fields) {
    if (!Number.isInteger(value) || value < 1 || value > 0xffffffff) {
      throw new GeometryError(`${name} must be a positive uint32, got ${value}`);
    }
  }
  if (h.rawFrameCount % h.tTokens !== 0) {
    throw new GeometryError(
      `raw frame count ${h.rawFrameCount} not divisible by T'=${h.tTokens}`
    );
  }
}

/** Serialize a header + payload into one ESCF v1 buffer. */
export function packFeatures(header: EscfHeader, payload: Float32Array): Buffer {
  checkHeader(header);
  const tokens = header.tTokens * header.height * header.width;
  if (payload.length !== tokens * header.channels) {
    throw new GeometryError(
      `payload has ${payload.length} values, header implies ${tokens * header.channels}`
    );
  }
  const buf = Buffer.alloc(HEADER_BYTES + payload.length * 4);
  buf.write(ESCF_MAGIC, 0, "latin1");
  const words = [
    ESCF_VERSION,
    header.tTokens,
    header.height,
    header.width,
    header.channels,
    header.rawFrameCount,
    header.framesPerWindow,
  ];
  words.forEach((w, i) => buf.writeUInt32LE(w, 4 + 4 * i));
  const view = new DataView(buf.buffer, buf.byteOffset + HEADER_BYTES);
  for (let i = 0; i < payload.length; i++) {
    view.setFloat32(4 * i, payload[i], true);
  }
  return buf;
}

export function writeFeatures(path: string, header: EscfHeader, payload: Float32Array): void {
  fs.writeFileSync(path, packFeatures(header, payload));
}

/**
 * Read an ESCF v1 file back. The failure taxonomy matches the counting
 * library's loader: foreign file, newer writer, inconsistent header, or
 * short read each get their own error type.
 */
export function readFeatures(path: string): TokenFile {
  const buf = fs.readFileSync(path);
  if (buf.subarray(0, 4).toString("latin1") !== ESCF_MAGIC) {
    throw new BadMagicError(`${path}: not an ESCF file`);
  }
  if (buf.length < HEADER_BYTES) {
    throw new TruncatedPayloadError(`${path}: header cut short`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== ESCF_VERSION) {
    throw new UnsupportedVersionError(`${path}: version ${version}, expected ${ESCF_VERSION}`);
  }
  const header: EscfHeader = {
    tTokens: buf.readUInt32LE(8),
    height: buf.readUInt32LE(12),
    width: buf.readUInt32LE(16),
    channels: buf.readUInt32LE(20),
    rawFrameCount: buf.readUInt32LE(24),
    framesPerWindow: buf.readUInt32LE(28),
  };
  const dims = [
    header.tTokens,
    header.height,
    header.width,
    header.channels,
    header.rawFrameCount,
    header.framesPerWindow,
  ];
  if (Math.min(...dims) < 1) {
    throw new GeometryError(`${path}: zero dimension in header`);
  }
  if (header.rawFrameCount % header.tTokens !== 0) {
    throw new GeometryError(
      `${path}: ${header.rawFrameCount} frames not divisible by T'=${header.tTokens}`
    );
  }
  const expected = header.tTokens * header.height * header.width * header.channels * 4;
  const body = buf.length - HEADER_BYTES;
  if (body < expected) {
    throw new TruncatedPayloadError(
      `${path}: payload has ${body} bytes, header implies ${expected}`
    );
  }
  if (body > expected) {
    throw new GeometryError(`${path}: ${body - expected} trailing bytes after payload`);
  }
  const payload = new Float32Array(expected / 4);
  const view = new DataView(buf.buffer, buf.byteOffset + HEADER_BYTES, expected);
  for (let i = 0; i < payload.length; i++) {
    payload[i] = view.getFloat32(4 * i, true);
  }
  return { ...header, payload };
}
