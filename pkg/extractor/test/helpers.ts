import * as fs from "fs";
import * as os from "os";
import * as path from "path";

export function mkTmp(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "escx-"));
}

/**
 * Frames of a bright horizontal bar oscillating vertically, one full
 * oscillation every ``period`` frames. Crude but visibly periodic, so a
 * video of n frames carries n/period repetitions.
 */
export function barVideoFrames(options: {
  n: number;
  width: number;
  height: number;
  period: number;
}): Uint8Array[] {
  const { n, width, height, period } = options;
  const barRows = Math.max(2, Math.floor(height / 6));
  const frames: Uint8Array[] = [];
  for (let t = 0; t < n; t++) {
    const frame = new Uint8Array(width * height).fill(32);
    const phase = 0.5 - 0.5 * Math.cos((2 * Math.PI * t) / period);
    const top = Math.round((height - barRows) * phase);
    for (let r = top; r < top + barRows; r++) {
      frame.fill(220, r * width, (r + 1) * width);
    }
    frames.push(frame);
  }
  return frames;
}

/** Serialize luma frames as an uncompressed YUV4MPEG2 stream. */
export function encodeY4m(
  frames: Uint8Array[],
  width: number,
  height: number,
  options: { fpsNum?: number; fpsDen?: number; colourspace?: string } = {}
): Buffer {
  const { fpsNum = 30, fpsDen = 1, colourspace = "420jpeg" } = options;
  const header = Buffer.from(
    `YUV4MPEG2 W${width} H${height} F${fpsNum}:${fpsDen} Ip A1:1 C${colourspace}\n`,
    "latin1"
  );
  let chroma = 0;
  if (colourspace.startsWith("420")) chroma = 2 * Math.ceil(width / 2) * Math.ceil(height / 2);
  else if (colourspace.startsWith("422")) chroma = 2 * Math.ceil(width / 2) * height;
  else if (colourspace.startsWith("444")) chroma = 2 * width * height;
  const marker = Buffer.from("FRAME\n", "latin1");
  const parts: Buffer[] = [header];
  for (const frame of frames) {
    parts.push(marker, Buffer.from(frame), Buffer.alloc(chroma, 128));
  }
  return Buffer.concat(parts);
}

export function writeY4m(
  file: string,
  frames: Uint8Array[],
  width: number,
  height: number,
  options: { fpsNum?: number; fpsDen?: number; colourspace?: string } = {}
): string {
  fs.writeFileSync(file, encodeY4m(frames, width, height, options));
  return file;
}

export function writePgmSequence(
  dir: string,
  frames: Uint8Array[],
  width: number,
  height: number
): void {
  fs.mkdirSync(dir, { recursive: true });
  frames.forEach((frame, i) => {
    const name = `frame${String(i).padStart(5, "0")}.pgm`;
    const header = Buffer.from(`P5\n${width} ${height}\n255\n`, "latin1");
    fs.writeFileSync(path.join(dir, name), Buffer.concat([header, Buffer.from(frame)]));
  });
}
