import * as fs from "fs";
import * as path from "path";

/** A decoded clip: per-frame luma planes plus geometry and frame rate. */
export interface VideoClip {
  width: number;
  height: number;
  fps: number;
  /** One luma plane per frame, row-major width*height bytes. */
  frames: Uint8Array[];
}

export class VideoDecodeError extends Error {}

const FRAME_MARKER = "FRAME";

/** Bytes per chroma pair (Cb+Cr) for the Y4M colourspaces we accept. */
function chromaBytes(colourspace: string, width: number, height: number): number {
  if (colourspace === "mono") return 0;
  if (colourspace.startsWith("420")) {
    return 2 * Math.ceil(width / 2) * Math.ceil(height / 2);
  }
  if (colourspace.startsWith("422")) return 2 * Math.ceil(width / 2) * height;
  if (colourspace.startsWith("444")) return 2 * width * height;
  throw new VideoDecodeError(`unsupported Y4M colourspace C${colourspace}`);
}

function readLine(buf: Buffer, start: number, what: string): { line: string; next: number } {
  const nl = buf.indexOf(0x0a, start);
  if (nl < 0) throw new VideoDecodeError(`${what}: missing newline`);
  return { line: buf.subarray(start, nl).toString("latin1"), next: nl + 1 };
}

/**
 * Parse an uncompressed YUV4MPEG2 stream into luma frames.
 *
 * Only the luma plane is kept; chroma planes are sized from the C tag and
 * skipped. Interlace and aspect tags are ignored.
 */
export function parseY4m(buf: Buffer): VideoClip {
  if (buf.subarray(0, 9).toString("latin1") !== "YUV4MPEG2") {
    throw new VideoDecodeError("not a YUV4MPEG2 stream");
  }
  const header = readLine(buf, 0, "stream header");
  let width = 0;
  let height = 0;
  let fpsNum = 30;
  let fpsDen = 1;
  let colourspace = "420jpeg";
  for (const tag of header.line.split(" ").slice(1)) {
    if (tag === "") continue;
    const value = tag.slice(1);
    switch (tag[0]) {
      case "W":
        width = parseInt(value, 10);
        break;
      case "H":
        height = parseInt(value, 10);
        break;
      case "F": {
        const m = /^(\d+):(\d+)$/.exec(value);
        if (!m) throw new VideoDecodeError(`bad frame rate tag ${tag}`);
        fpsNum = parseInt(m[1], 10);
        fpsDen = parseInt(m[2], 10);
        break;
      }
      case "C":
        colourspace = value;
        break;
      default:
        break; // I/A/X tags carry nothing we need
    }
  }
  if (!(width > 0) || !(height > 0)) {
    throw new VideoDecodeError(`bad stream geometry ${width}x${height}`);
  }
  if (!(fpsNum > 0) || !(fpsDen > 0)) {
    throw new VideoDecodeError("bad frame rate");
  }
  const lumaBytes = width * height;
  const skipBytes = chromaBytes(colourspace, width, height);

  const frames: Uint8Array[] = [];
  let pos = header.next;
  while (pos < buf.length) {
    const mark = readLine(buf, pos, `frame ${frames.length} header`);
    if (mark.line !== FRAME_MARKER && !mark.line.startsWith(FRAME_MARKER + " ")) {
      throw new VideoDecodeError(`frame ${frames.length}: expected FRAME marker`);
    }
    const end = mark.next + lumaBytes + skipBytes;
    if (end > buf.length) {
      throw new VideoDecodeError(`frame ${frames.length}: truncated plane data`);
    }
    frames.push(Uint8Array.prototype.slice.call(buf.subarray(mark.next, mark.next + lumaBytes)));
    pos = end;
  }
  return { width, height, fps: fpsNum / fpsDen, frames };
}

function parsePgm(buf: Buffer, name: string): { width: number; height: number; data: Uint8Array } {
  // header = magic, width, height, maxval as whitespace-separated tokens,
  // with # comments running to end of line
  if (buf.subarray(0, 2).toString("latin1") !== "P5") {
    throw new VideoDecodeError(`${name}: not a binary PGM (P5) file`);
  }
  const fields: number[] = [];
  let pos = 2;
  while (fields.length < 3) {
    if (pos >= buf.length) throw new VideoDecodeError(`${name}: header cut short`);
    const ch = buf[pos];
    if (ch === 0x23) {
      // comment
      const nl = buf.indexOf(0x0a, pos);
      pos = nl < 0 ? buf.length : nl + 1;
    } else if (ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d) {
      pos += 1;
    } else {
      let end = pos;
      while (end < buf.length && buf[end] >= 0x30 && buf[end] <= 0x39) end += 1;
      if (end === pos) throw new VideoDecodeError(`${name}: malformed header token`);
      fields.push(parseInt(buf.subarray(pos, end).toString("latin1"), 10));
      pos = end;
    }
  }
  const [width, height, maxval] = fields;
  if (!(width > 0) || !(height > 0)) {
    throw new VideoDecodeError(`${name}: bad geometry ${width}x${height}`);
  }
  if (maxval !== 255) {
    throw new VideoDecodeError(`${name}: only maxval 255 is supported, got ${maxval}`);
  }
  pos += 1; // single whitespace byte after maxval
  if (pos + width * height > buf.length) {
    throw new VideoDecodeError(`${name}: truncated pixel data`);
  }
  return {
    width,
    height,
    data: Uint8Array.prototype.slice.call(buf.subarray(pos, pos + width * height)),
  };
}

/** Read a directory of binary PGM frames, ordered by file name. */
export function readPgmSequence(dir: string): Omit<VideoClip, "fps"> {
  const names = fs
    .readdirSync(dir)
    .filter(n => n.toLowerCase().endsWith(".pgm"))
    .sort();
  if (names.length === 0) {
    throw new VideoDecodeError(`${dir}: no .pgm frames found`);
  }
  const frames: Uint8Array[] = [];
  let width = 0;
  let height = 0;
  for (const name of names) {
    const frame = parsePgm(fs.readFileSync(path.join(dir, name)), name);
    if (frames.length === 0) {
      width = frame.width;
      height = frame.height;
    } else if (frame.width !== width || frame.height !== height) {
      throw new VideoDecodeError(
        `${name}: geometry ${frame.width}x${frame.height} differs from first frame ${width}x${height}`
      );
    }
    frames.push(frame.data);
  }
  return { width, height, frames };
}

/**
 * Load a video as luma frames: either a .y4m file or a directory of
 * binary PGM frames. Frame directories carry no rate, so ``fps`` is
 * required for them; for .y4m it overrides the stream's F tag.
 */
export function loadVideo(source: string, fps?: number): VideoClip {
  if (fps !== undefined && !(fps > 0)) {
    throw new VideoDecodeError(`fps must be positive, got ${fps}`);
  }
  const stat = fs.statSync(source);
  if (stat.isDirectory()) {
    if (fps === undefined) {
      throw new VideoDecodeError(`${source}: frame directories need an explicit fps`);
    }
    return { ...readPgmSequence(source), fps };
  }
  const clip = parseY4m(fs.readFileSync(source));
  return fps === undefined ? clip : { ...clip, fps };
}
