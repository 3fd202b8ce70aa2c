/** APF1: bit-exact binary container for per-layer span representations.
 *
 * Layout (all integers little-endian):
 *
 *     offset 0   magic            4 bytes  "APF1"
 *            4   version          u32
 *            8   num_layers  L    u32
 *           12   hidden_dim  H    u32
 *           16   num_classes K    u32
 *           20   num_examples N   u64
 *           28   dtype_code       u32      (0 = IEEE float32)
 *           32   metadata_len     u32
 *           36   metadata         canonical-JSON object, UTF-8
 *                offset table     N x u64  (absolute record offsets)
 *                records          example_id u64, label u32, span_len u32,
 *                                 tensor T*L*H float32, [layer][token][dim]
 *
 * The writer is canonical: identical records and metadata always produce
 * identical bytes, so files are comparable across implementations.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { CorruptionError, FormatError } from "./errors.js";

export const MAGIC = "APF1";
export const VERSION = 1;
export const DTYPE_FLOAT32 = 0;

const HEADER_SIZE = 36;
const RECORD_PREFIX_SIZE = 16; // example_id u64, label u32, span_len u32

export type Metadata = Record<string, unknown>;

export interface ApfHeader {
  numLayers: number;
  hiddenDim: number;
  numClasses: number;
  numExamples: number;
  dtypeCode: number;
  version: number;
  metadata: Metadata;
}

export function makeHeader(
  fields: Pick<ApfHeader, "numLayers" | "hiddenDim" | "numClasses" | "numExamples"> &
    Partial<ApfHeader>,
): ApfHeader {
  return {
    dtypeCode: DTYPE_FLOAT32,
    version: VERSION,
    metadata: {},
    ...fields,
  };
}

export interface ApfRecord {
  exampleId: number;
  label: number;
  spanLen: number;
  /** Flat (L, spanLen, H) layer-major float32 values. */
  tensor: Float32Array;
}

function validateHeader(h: ApfHeader, path: string): void {
  if (h.numLayers < 1 || h.hiddenDim < 1) {
    throw new FormatError(`${path}: invalid dimensions L=${h.numLayers} H=${h.hiddenDim}`);
  }
  if (h.numClasses < 2) {
    throw new FormatError(`${path}: num_classes must be >= 2, got ${h.numClasses}`);
  }
  if (h.numExamples < 1) {
    throw new FormatError(`${path}: num_examples must be >= 1, got ${h.numExamples}`);
  }
  if (h.dtypeCode !== DTYPE_FLOAT32) {
    throw new FormatError(`${path}: unsupported dtype_code ${h.dtypeCode}`);
  }
}

/** Canonical JSON: keys sorted at every level, no whitespace, non-ASCII
 * escaped as \uxxxx — byte-compatible with the reference writer. Only
 * strings, integers, booleans, null, arrays, and plain objects are
 * representable; non-integer numbers are rejected because their text
 * form is not canonical across languages. */
export function canonicalJson(value: unknown): string {
  if (value === null) return "null";
  if (typeof value === "boolean") return value ? "true" : "false";
  if (typeof value === "number") {
    if (!Number.isInteger(value)) {
      throw new FormatError(`metadata number ${value} is not an integer`);
    }
    return String(value);
  }
  if (typeof value === "string") return escapeJsonString(value);
  if (Array.isArray(value)) {
    return `[${value.map(canonicalJson).join(",")}]`;
  }
  if (typeof value === "object") {
    const entries = Object.entries(value as Metadata)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([k, v]) => `${escapeJsonString(k)}:${canonicalJson(v)}`);
    return `{${entries.join(",")}}`;
  }
  throw new FormatError(`metadata value of type ${typeof value} is not representable`);
}

function escapeJsonString(s: string): string {
  let out = '"';
  for (let i = 0; i < s.length; i++) {
    const code = s.charCodeAt(i);
    const ch = s[i];
    if (ch === '"') out += '\\"';
    else if (ch === "\\") out += "\\\\";
    else if (ch === "\n") out += "\\n";
    else if (ch === "\r") out += "\\r";
    else if (ch === "\t") out += "\\t";
    else if (ch === "\b") out += "\\b";
    else if (ch === "\f") out += "\\f";
    else if (code < 0x20 || code > 0x7e) {
      out += "\\u" + code.toString(16).padStart(4, "0");
    } else out += ch;
  }
  return out + '"';
}

function checkRecord(h: ApfHeader, rec: ApfRecord, index: number): void {
  const { numLayers: L, hiddenDim: H } = h;
  if (rec.spanLen < 1) {
    throw new FormatError(`record ${index}: span_len must be >= 1`);
  }
  if (rec.tensor.length !== L * rec.spanLen * H) {
    throw new FormatError(
      `record ${index}: tensor length ${rec.tensor.length} does not match ` +
        `(L=${L}, T=${rec.spanLen}, H=${H})`,
    );
  }
  if (rec.label < 0 || rec.label >= h.numClasses) {
    throw new FormatError(
      `record ${index}: label ${rec.label} out of range [0, ${h.numClasses})`,
    );
  }
  for (let i = 0; i < rec.tensor.length; i++) {
    if (!Number.isFinite(rec.tensor[i])) {
      throw new FormatError(`record ${index}: non-finite value in tensor`);
    }
  }
}

export function writeActivationSet(header: ApfHeader, records: ApfRecord[], path: string): void {
  validateHeader(header, path);
  const n = header.numExamples;
  if (records.length !== n) {
    throw new FormatError(
      `${path}: header declares num_examples=${n} but got ${records.length} records`,
    );
  }
  const metaBytes = Buffer.from(canonicalJson(header.metadata), "utf-8");
  const tableStart = HEADER_SIZE + metaBytes.length;
  let total = tableStart + 8 * n;
  for (let i = 0; i < n; i++) {
    checkRecord(header, records[i], i);
    total += RECORD_PREFIX_SIZE + 4 * records[i].tensor.length;
  }

  const buf = Buffer.alloc(total);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(header.version, 4);
  buf.writeUInt32LE(header.numLayers, 8);
  buf.writeUInt32LE(header.hiddenDim, 12);
  buf.writeUInt32LE(header.numClasses, 16);
  buf.writeBigUInt64LE(BigInt(n), 20);
  buf.writeUInt32LE(header.dtypeCode, 28);
  buf.writeUInt32LE(metaBytes.length, 32);
  metaBytes.copy(buf, HEADER_SIZE);

  let pos = tableStart + 8 * n;
  for (let i = 0; i < n; i++) {
    const rec = records[i];
    buf.writeBigUInt64LE(BigInt(pos), tableStart + 8 * i);
    buf.writeBigUInt64LE(BigInt(rec.exampleId), pos);
    buf.writeUInt32LE(rec.label, pos + 8);
    buf.writeUInt32LE(rec.spanLen, pos + 12);
    let at = pos + RECORD_PREFIX_SIZE;
    for (let v = 0; v < rec.tensor.length; v++, at += 4) {
      buf.writeFloatLE(rec.tensor[v], at);
    }
    pos = at;
  }
  writeFileSync(path, buf);
}

/** Random-access read-only view of an APF1 file (fully buffered). */
export class ApfReader {
  readonly header: ApfHeader;
  readonly length: number;
  private readonly buf: Buffer;
  private readonly offsets: number[];
  private readonly path: string;

  constructor(path: string) {
    this.path = path;
    this.buf = readFileSync(path);
    const buf = this.buf;
    if (buf.length < HEADER_SIZE) {
      throw new CorruptionError(`${path}: truncated header`, buf.length);
    }
    if (buf.toString("ascii", 0, 4) !== MAGIC) {
      throw new FormatError(`${path}: bad magic ${JSON.stringify(buf.toString("latin1", 0, 4))}`);
    }
    const version = buf.readUInt32LE(4);
    if (version !== VERSION) {
      throw new FormatError(`${path}: unsupported version ${version}`);
    }
    const numLayers = buf.readUInt32LE(8);
    const hiddenDim = buf.readUInt32LE(12);
    const numClasses = buf.readUInt32LE(16);
    const numExamples = Number(buf.readBigUInt64LE(20));
    const dtypeCode = buf.readUInt32LE(28);
    const metaLen = buf.readUInt32LE(32);
    const metaEnd = HEADER_SIZE + metaLen;
    if (buf.length < metaEnd) {
      throw new CorruptionError(`${path}: truncated metadata`, buf.length);
    }
    let metadata: Metadata;
    try {
      metadata = JSON.parse(buf.toString("utf-8", HEADER_SIZE, metaEnd));
    } catch (e) {
      throw new FormatError(`${path}: metadata is not JSON: ${e}`);
    }
    this.header = { numLayers, hiddenDim, numClasses, numExamples, dtypeCode, version, metadata };
    validateHeader(this.header, path);
    const tableEnd = metaEnd + 8 * numExamples;
    if (buf.length < tableEnd) {
      throw new CorruptionError(`${path}: truncated offset table`, buf.length);
    }
    this.offsets = [];
    for (let i = 0; i < numExamples; i++) {
      this.offsets.push(Number(buf.readBigUInt64LE(metaEnd + 8 * i)));
      if (i > 0 && this.offsets[i] <= this.offsets[i - 1]) {
        throw new CorruptionError(`${path}: offset table not strictly increasing`, metaEnd);
      }
    }
    if (this.offsets[0] !== tableEnd) {
      throw new CorruptionError(
        `${path}: first record offset ${this.offsets[0]} != ${tableEnd}`,
        metaEnd,
      );
    }
    this.length = numExamples;
  }

  get(index: number): ApfRecord {
    if (index < 0 || index >= this.length) {
      throw new RangeError(`record index ${index} out of range [0, ${this.length})`);
    }
    const buf = this.buf;
    const off = this.offsets[index];
    if (buf.length < off + RECORD_PREFIX_SIZE) {
      throw new CorruptionError(`${this.path}: truncated record ${index}`, buf.length);
    }
    const exampleId = Number(buf.readBigUInt64LE(off));
    const label = buf.readUInt32LE(off + 8);
    const spanLen = buf.readUInt32LE(off + 12);
    const nvals = this.header.numLayers * spanLen * this.header.hiddenDim;
    const dataOff = off + RECORD_PREFIX_SIZE;
    if (buf.length < dataOff + 4 * nvals) {
      throw new CorruptionError(`${this.path}: truncated tensor of record ${index}`, buf.length);
    }
    const tensor = new Float32Array(nvals);
    for (let v = 0; v < nvals; v++) tensor[v] = buf.readFloatLE(dataOff + 4 * v);
    return { exampleId, label, spanLen, tensor };
  }

  records(): ApfRecord[] {
    const out: ApfRecord[] = [];
    for (let i = 0; i < this.length; i++) out.push(this.get(i));
    return out;
  }

  exampleIds(): number[] {
    return this.records().map((r) => r.exampleId);
  }

  labels(): number[] {
    return this.records().map((r) => r.label);
  }
}

export function readActivationSet(path: string): ApfReader {
  return new ApfReader(path);
}
