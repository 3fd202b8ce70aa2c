/** Command-line entry: convert raw datasets, extract activations.
 *
 *   apf-extractor convert --dataset lcc --in raw.tsv --out records.jsonl
 *   apf-extractor extract --model toy --mode pretrained --seed 0 \
 *       --in records.jsonl --out set.apf
 *
 * Exit codes: 0 ok, 2 usage, 3 missing/unreadable file, 4 malformed
 * input. Errors are single-line JSON on stderr: {"error", "kind"}.
 */

import { readFileSync } from "node:fs";
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import { loadRecords, writeRecords } from "./canonical.js";
import { DATASET_KINDS, DatasetKind, convertDataset } from "./datasets.js";
import { WEIGHTS_MODES, WeightsMode, resolveModel } from "./encoder.js";
import { CorruptionError, FormatError, RowError, UsageError } from "./errors.js";
import { extract } from "./extract.js";

const EXIT = { ok: 0, internal: 1, usage: 2, io: 3, format: 4 } as const;
type ErrorKind = keyof typeof EXIT;

function classify(e: unknown): ErrorKind {
  if (e instanceof UsageError) return "usage";
  if (e instanceof FormatError || e instanceof RowError || e instanceof CorruptionError) {
    return "format";
  }
  if (e instanceof Error && "code" in e && typeof e.code === "string") {
    // parseArgs raises coded errors too; everything else coded is fs
    return e.code.startsWith("ERR_PARSE_ARGS") ? "usage" : "io";
  }
  return "internal";
}

function fail(kind: ErrorKind, message: string): number {
  process.stderr.write(JSON.stringify({ error: message, kind }) + "\n");
  return EXIT[kind];
}

function requireStr(
  values: Record<string, string | boolean | undefined>,
  name: string,
): string {
  const v = values[name];
  if (typeof v !== "string" || v.length === 0) {
    throw new UsageError(`missing required flag --${name}`);
  }
  return v;
}

function cmdConvert(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      dataset: { type: "string" },
      in: { type: "string" },
      out: { type: "string" },
    },
  });
  const kind = requireStr(values, "dataset");
  if (!(DATASET_KINDS as readonly string[]).includes(kind)) {
    throw new UsageError(`unknown dataset ${JSON.stringify(kind)}; known: ${DATASET_KINDS.join(", ")}`);
  }
  const inPath = requireStr(values, "in");
  const outPath = requireStr(values, "out");
  const result = convertDataset(kind as DatasetKind, readFileSync(inPath, "utf-8"), inPath);
  writeRecords(result.records, outPath);
  process.stdout.write(`wrote ${outPath}\n`);
  process.stdout.write(
    `summary ${JSON.stringify({ counts: result.counts, records: result.records.length })}\n`,
  );
  return EXIT.ok;
}

function cmdExtract(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      model: { type: "string" },
      mode: { type: "string" },
      seed: { type: "string" },
      in: { type: "string" },
      out: { type: "string" },
    },
  });
  const spec = resolveModel(requireStr(values, "model"));
  const mode = requireStr(values, "mode");
  if (!(WEIGHTS_MODES as readonly string[]).includes(mode)) {
    throw new UsageError(`mode must be one of ${WEIGHTS_MODES.join(", ")}, got ${mode}`);
  }
  const seed = Number(values.seed ?? "0");
  if (!Number.isInteger(seed)) throw new UsageError(`--seed must be an integer`);
  const inPath = requireStr(values, "in");
  const outPath = requireStr(values, "out");
  const records = loadRecords(inPath);
  const result = extract(spec, mode as WeightsMode, seed, records, outPath);
  process.stdout.write(`wrote ${outPath}\n`);
  process.stdout.write(
    `summary ${JSON.stringify({
      written: result.written,
      truncated: result.truncated,
      dropped: result.dropped,
      label_map: result.labelMap,
    })}\n`,
  );
  return EXIT.ok;
}

const USAGE =
  "usage: apf-extractor convert --dataset KIND --in RAW --out RECORDS.jsonl\n" +
  "       apf-extractor extract --model ID --mode pretrained|randomized " +
  "--seed N --in RECORDS.jsonl --out SET.apf\n";

export function runCli(argv: string[]): number {
  try {
    const [command, ...rest] = argv;
    if (command === "convert") return cmdConvert(rest);
    if (command === "extract") return cmdExtract(rest);
    if (command === "--help" || command === "-h") {
      process.stdout.write(USAGE);
      return EXIT.ok;
    }
    throw new UsageError(command ? `unknown command ${JSON.stringify(command)}` : USAGE.trim());
  } catch (e) {
    const kind = classify(e);
    return fail(kind, e instanceof Error ? `${e.constructor.name}: ${e.message}` : String(e));
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href;
if (invokedDirectly) {
  process.exit(runCli(process.argv.slice(2)));
}
