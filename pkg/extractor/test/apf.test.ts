import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { beforeAll, describe, expect, it } from "vitest";

import {
  ApfRecord,
  canonicalJson,
  makeHeader,
  readActivationSet,
  writeActivationSet,
} from "../src/apf.js";
import { CorruptionError, FormatError } from "../src/errors.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const GOLDEN_SCRIPT = join(HERE, "..", "scripts", "make_golden.py");

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "apf-"));
}

const L = 2;
const H = 5;

/** Same pinned records as scripts/make_golden.py builds in Python. */
function pinnedRecords(): ApfRecord[] {
  const specs: Array<[number, number, number]> = [
    [7, 0, 1],
    [2 ** 40 + 7, 2, 3],
    [11, 1, 2],
  ];
  return specs.map(([exampleId, label, span], i) => {
    const n = L * span * H;
    const tensor = new Float32Array(n);
    for (let j = 0; j < n; j++) tensor[j] = ((i * 31 + j * 7) % 23) / 8 - 1.25;
    return { exampleId, label, spanLen: span, tensor };
  });
}

function pinnedHeader() {
  return makeHeader({
    numLayers: L,
    hiddenDim: H,
    numClasses: 3,
    numExamples: 3,
    metadata: {
      encoder: "golden",
      seed: 3,
      note: "naïve ✓",
      label_map: { literal: 0, metaphor: 1, other: 2 },
    },
  });
}

describe("apf round trip", () => {
  it("reads back exactly what was written", () => {
    const path = join(tmp(), "rt.apf");
    const records = pinnedRecords();
    writeActivationSet(pinnedHeader(), records, path);
    const reader = readActivationSet(path);
    expect(reader.length).toBe(3);
    expect(reader.header.numLayers).toBe(L);
    expect(reader.header.metadata.encoder).toBe("golden");
    for (let i = 0; i < 3; i++) {
      const got = reader.get(i);
      expect(got.exampleId).toBe(records[i].exampleId);
      expect(got.label).toBe(records[i].label);
      expect(got.spanLen).toBe(records[i].spanLen);
      expect([...got.tensor]).toEqual([...records[i].tensor]);
    }
    expect(reader.exampleIds()).toEqual([7, 2 ** 40 + 7, 11]);
    expect(reader.labels()).toEqual([0, 2, 1]);
  });

  it("is byte-deterministic", () => {
    const dir = tmp();
    writeActivationSet(pinnedHeader(), pinnedRecords(), join(dir, "a.apf"));
    writeActivationSet(pinnedHeader(), pinnedRecords(), join(dir, "b.apf"));
    expect(readFileSync(join(dir, "a.apf")).equals(readFileSync(join(dir, "b.apf")))).toBe(true);
  });
});

describe("cross-language bytes", () => {
  const dir = tmp();

  beforeAll(() => {
    execFileSync("python3", [GOLDEN_SCRIPT, dir]);
  });

  it("writer output is byte-identical to the reference writer", () => {
    const ours = join(dir, "ours.apf");
    writeActivationSet(pinnedHeader(), pinnedRecords(), ours);
    const reference = readFileSync(join(dir, "golden.apf"));
    expect(readFileSync(ours).equals(reference)).toBe(true);
  });

  it("reader consumes a reference-written generated set", () => {
    const reader = readActivationSet(join(dir, "synth.apf"));
    expect(reader.length).toBe(12);
    expect(reader.header.numLayers).toBe(3);
    expect(reader.header.hiddenDim).toBe(4);
    expect(reader.header.metadata.signal_layer).toBe(1);
    expect(reader.exampleIds()).toEqual([...Array(12).keys()]);
    for (const rec of reader.records()) {
      expect(rec.label).toBeGreaterThanOrEqual(0);
      expect(rec.label).toBeLessThan(2);
      expect(rec.tensor.length).toBe(3 * rec.spanLen * 4);
      for (const v of rec.tensor) expect(Number.isFinite(v)).toBe(true);
    }
  });
});

describe("canonical json", () => {
  it("sorts keys at every level and escapes non-ascii", () => {
    expect(canonicalJson({ b: 1, a: { d: null, c: [true, "é"] } })).toBe(
      '{"a":{"c":[true,"\\u00e9"],"d":null},"b":1}',
    );
  });

  it("rejects non-integer numbers", () => {
    expect(() => canonicalJson({ x: 0.5 })).toThrow(FormatError);
  });
});

describe("damage detection", () => {
  function goodFile(): Buffer {
    const path = join(tmp(), "good.apf");
    writeActivationSet(pinnedHeader(), pinnedRecords(), path);
    return readFileSync(path);
  }

  it("rejects a corrupted magic, naming the file", () => {
    const raw = goodFile();
    raw[0] ^= 0xff;
    const path = join(tmp(), "badmagic.apf");
    writeFileSync(path, raw);
    expect(() => readActivationSet(path)).toThrow(FormatError);
    expect(() => readActivationSet(path)).toThrow(/badmagic\.apf.*bad magic/);
  });

  it("rejects truncation with the damage offset", () => {
    const raw = goodFile();
    for (const cut of [4, 20, raw.length - 3]) {
      const path = join(tmp(), "cut.apf");
      writeFileSync(path, raw.subarray(0, cut));
      let caught: unknown;
      try {
        readActivationSet(path).records();
      } catch (e) {
        caught = e;
      }
      expect(caught).toBeInstanceOf(CorruptionError);
      expect((caught as CorruptionError).offset).toBe(cut);
    }
  });

  it("rejects a non-monotone offset table", () => {
    const raw = goodFile();
    const metaLen = raw.readUInt32LE(32);
    const tableAt = 36 + metaLen;
    const first = raw.readBigUInt64LE(tableAt);
    const second = raw.readBigUInt64LE(tableAt + 8);
    raw.writeBigUInt64LE(second, tableAt);
    raw.writeBigUInt64LE(first, tableAt + 8);
    const path = join(tmp(), "swapped.apf");
    writeFileSync(path, raw);
    expect(() => readActivationSet(path)).toThrow(/strictly increasing/);
  });
});

describe("writer validation", () => {
  it("rejects out-of-range labels, empty spans, and count mismatches", () => {
    const path = join(tmp(), "never.apf");
    const base = pinnedRecords();
    expect(() =>
      writeActivationSet(pinnedHeader(), [{ ...base[0], label: 3 }, base[1], base[2]], path),
    ).toThrow(/record 0: label 3/);
    expect(() =>
      writeActivationSet(
        pinnedHeader(),
        [{ ...base[0], spanLen: 0, tensor: new Float32Array(0) }, base[1], base[2]],
        path,
      ),
    ).toThrow(/span_len/);
    expect(() => writeActivationSet(pinnedHeader(), base.slice(0, 2), path)).toThrow(
      /num_examples=3 but got 2/,
    );
    const badHeader = makeHeader({ numLayers: L, hiddenDim: H, numClasses: 1, numExamples: 3 });
    expect(() => writeActivationSet(badHeader, base, path)).toThrow(/num_classes/);
  });
});
