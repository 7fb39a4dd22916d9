#!/usr/bin/env node
import * as fs from "fs";
import { parseArgs } from "util";

import { PRESETS } from "./encoder";
import { ExtractionJob, VideoAnnotation, extract, extractExemplarClip } from "./extract";

const USAGE = `usage: escf-extract <command> [options]

commands:
  extract    decode a video and emit ESCF tokens plus an annotation sidecar
  presets    list the encoder presets

extract options:
  --video PATH        .y4m file or directory of binary PGM frames (required)
  --out DIR           output directory (required)
  --stride N          keep every N-th frame inside each window (default 4)
  --window N          raw frames per window (default 64)
  --preset ID         encoder preset id (default vitb)
  --fps N             frame rate; required for frame directories
  --video-id ID       defaults to the video's base name
  --class-label NAME  sidecar class label (default unknown)
  --annotation PATH   JSON file holding {count, repetitions}
  --count N           count-only annotation (no intervals)
  --exemplar S:E      also cut [S, E) as a single-window exemplar clip
`;

function parseAnnotationFile(file: string): VideoAnnotation {
  const record = JSON.parse(fs.readFileSync(file, "utf8"));
  if (typeof record.count !== "number") {
    throw new Error(`${file}: annotation needs a numeric 'count'`);
  }
  const reps = record.repetitions ?? [];
  if (!Array.isArray(reps)) {
    throw new Error(`${file}: 'repetitions' must be a list of [start, end) pairs`);
  }
  return {
    count: record.count,
    repetitions: reps.map((r: unknown) => {
      if (!Array.isArray(r) || r.length !== 2) {
        throw new Error(`${file}: bad interval ${JSON.stringify(r)}`);
      }
      return [Number(r[0]), Number(r[1])] as [number, number];
    }),
  };
}

function parseInterval(text: string): [number, number] {
  const m = /^(-?\d+):(-?\d+)$/.exec(text);
  if (!m) throw new Error(`--exemplar wants START:END, got '${text}'`);
  return [parseInt(m[1], 10), parseInt(m[2], 10)];
}

function numberFlag(name: string, value: string): number {
  const n = Number(value);
  if (!Number.isFinite(n)) throw new Error(`--${name} wants a number, got '${value}'`);
  return n;
}

function runExtract(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      video: { type: "string" },
      out: { type: "string" },
      stride: { type: "string", default: "4" },
      window: { type: "string", default: "64" },
      preset: { type: "string", default: "vitb" },
      fps: { type: "string" },
      "video-id": { type: "string" },
      "class-label": { type: "string" },
      annotation: { type: "string" },
      count: { type: "string" },
      exemplar: { type: "string" },
    },
  });
  if (!values.video || !values.out) {
    throw new Error("--video and --out are required");
  }
  if (values.annotation && values.count) {
    throw new Error("--annotation and --count are mutually exclusive");
  }
  let annotation: VideoAnnotation | undefined;
  if (values.annotation) annotation = parseAnnotationFile(values.annotation);
  if (values.count) {
    annotation = { count: numberFlag("count", values.count), repetitions: [] };
  }
  const job: ExtractionJob = {
    video: values.video,
    outDir: values.out,
    stride: numberFlag("stride", values.stride as string),
    window: numberFlag("window", values.window as string),
    preset: values.preset,
    fps: values.fps === undefined ? undefined : numberFlag("fps", values.fps),
    videoId: values["video-id"],
    classLabel: values["class-label"],
    annotation,
  };
  const res = extract(job);
  if (res.framesDropped > 0) {
    console.error(
      `warning: dropped ${res.framesDropped} trailing frames short of a whole window`
    );
  }
  console.log(
    `${res.videoId}: ${res.windows} windows, T'=${res.tTokens}, ` +
      `R=${res.rawFramesUsed} -> ${res.escfPath}`
  );
  if (values.exemplar !== undefined) {
    const clip = extractExemplarClip(job, parseInterval(values.exemplar));
    console.log(
      `${clip.videoId}: 1 window, T'=${clip.tTokens}, R=${clip.rawFramesUsed} -> ${clip.escfPath}`
    );
  }
  return 0;
}

function runPresets(): number {
  for (const preset of Object.values(PRESETS)) {
    console.log(`${preset.id.padEnd(10)} ${preset.description}`);
  }
  return 0;
}

export function main(argv: string[]): number {
  try {
    const [command, ...rest] = argv;
    if (command === undefined || command === "--help" || command === "-h") {
      process.stdout.write(USAGE);
      return command === undefined ? 2 : 0;
    }
    if (command === "extract") return runExtract(rest);
    if (command === "presets") return runPresets();
    throw new Error(`unknown command '${command}'`);
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : String(err)}`);
    return 2;
  }
}

if (require.main === module) {
  process.exitCode = main(process.argv.slice(2));
}
