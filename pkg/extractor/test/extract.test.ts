import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { readActivationSet } from "../src/apf.js";
import { CanonicalRecord } from "../src/canonical.js";
import { MODELS, resolveModel } from "../src/encoder.js";
import { FormatError } from "../src/errors.js";
import { extract } from "../src/extract.js";
import { alignSpans, spanToSubtokens, words } from "../src/tokenize.js";

const TOY = MODELS.toy;

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "extract-"));
}

function rec(
  id: number,
  text: string,
  start: number,
  end: number,
  label: string,
): CanonicalRecord {
  return {
    id,
    text,
    span_start: start,
    span_end: end,
    label,
    lang: "en",
    dataset: "toy-fixture",
  };
}

const BASE: CanonicalRecord[] = [
  rec(1, "the economy is a fragile machine", 4, 6, "metaphor"),
  rec(2, "the printer is a fragile machine", 4, 6, "literal"),
  rec(3, "his metaphorical words cut deep", 1, 2, "metaphor"),
  rec(4, "the river flowed east", 2, 3, "literal"),
];

describe("extract", () => {
  it("emits one record per input with the model's row count", () => {
    const path = join(tmp(), "set.apf");
    const result = extract(TOY, "pretrained", 0, BASE, path);
    expect(result).toMatchObject({ written: 4, truncated: 0, dropped: 0 });
    expect(result.labelMap).toEqual({ literal: 0, metaphor: 1 });

    const reader = readActivationSet(path);
    expect(reader.length).toBe(4);
    expect(reader.header.numLayers).toBe(TOY.layers + 1); // embedding row included
    expect(reader.header.hiddenDim).toBe(TOY.hidden);
    expect(reader.header.numClasses).toBe(2);
    expect(reader.exampleIds()).toEqual([1, 2, 3, 4]);
    expect(reader.labels()).toEqual([1, 0, 1, 0]);
    expect(reader.header.metadata).toMatchObject({
      encoder: "toy",
      weights_mode: "pretrained",
      seed: 0,
      dataset: "toy-fixture",
    });
  });

  it("stores exactly the span's subtokens (alignment totality)", () => {
    const path = join(tmp(), "set.apf");
    extract(TOY, "pretrained", 0, BASE, path);
    const reader = readActivationSet(path);
    BASE.forEach((r, i) => {
      const map = alignSpans(words(r.text));
      const [s, e] = spanToSubtokens(map, r.span_start, r.span_end);
      expect(reader.get(i).spanLen).toBe(e - s);
      expect(reader.get(i).tensor.length).toBe((TOY.layers + 1) * (e - s) * TOY.hidden);
    });
  });

  it("is deterministic per (model, mode, seed)", () => {
    const dir = tmp();
    extract(TOY, "randomized", 7, BASE, join(dir, "a.apf"));
    extract(TOY, "randomized", 7, BASE, join(dir, "b.apf"));
    expect(readFileSync(join(dir, "a.apf")).equals(readFileSync(join(dir, "b.apf")))).toBe(true);
  });

  it("separates modes: same ids and labels, different representations", () => {
    const dir = tmp();
    extract(TOY, "pretrained", 0, BASE, join(dir, "p.apf"));
    extract(TOY, "randomized", 0, BASE, join(dir, "r.apf"));
    const p = readActivationSet(join(dir, "p.apf"));
    const r = readActivationSet(join(dir, "r.apf"));
    expect(p.exampleIds()).toEqual(r.exampleIds());
    expect(p.labels()).toEqual(r.labels());
    expect(p.header.metadata.weights_mode).toBe("pretrained");
    expect(r.header.metadata.weights_mode).toBe("randomized");
    let differ = false;
    for (let i = 0; i < p.length; i++) {
      const a = p.get(i).tensor;
      const b = r.get(i).tensor;
      expect(a.length).toBe(b.length);
      for (let v = 0; v < a.length; v++) if (a[v] !== b[v]) differ = true;
    }
    expect(differ).toBe(true);
  });

  it("pretrained weights are a pure function of the model id", () => {
    const dir = tmp();
    extract(TOY, "pretrained", 0, BASE, join(dir, "s0.apf"));
    extract(TOY, "pretrained", 5, BASE, join(dir, "s5.apf"));
    const a = readFileSync(join(dir, "s0.apf"));
    const b = readFileSync(join(dir, "s5.apf"));
    // only the recorded seed differs, never the representations
    expect(readActivationSet(join(dir, "s0.apf")).get(0).tensor).toEqual(
      readActivationSet(join(dir, "s5.apf")).get(0).tensor,
    );
    expect(a.equals(b)).toBe(false); // metadata records the run seed
  });

  it("randomized weights change with the seed", () => {
    const dir = tmp();
    extract(TOY, "randomized", 0, BASE, join(dir, "s0.apf"));
    extract(TOY, "randomized", 1, BASE, join(dir, "s1.apf"));
    const a = readActivationSet(join(dir, "s0.apf")).get(0).tensor;
    const b = readActivationSet(join(dir, "s1.apf")).get(0).tensor;
    expect([...a]).not.toEqual([...b]);
  });

  it("truncates only when the span survives, else drops and counts", () => {
    const longTail = Array.from({ length: 60 }, (_, i) => `w${i}`).join(" ");
    const spanSafe = rec(10, `safe start ${longTail}`, 0, 2, "metaphor");
    const spanLate = rec(11, `${longTail} late span`, 60, 62, "literal");
    const path = join(tmp(), "set.apf");
    const result = extract(TOY, "pretrained", 0, [...BASE, spanSafe, spanLate], path);
    expect(result.truncated).toBe(1);
    expect(result.dropped).toBe(1);
    const reader = readActivationSet(path);
    expect(reader.length).toBe(5);
    expect(reader.exampleIds()).toContain(10);
    expect(reader.exampleIds()).not.toContain(11);
    expect(reader.header.metadata).toMatchObject({ truncated: 1, dropped: 1 });
  });

  it("refuses header-only files and single-class corpora", () => {
    const longTail = Array.from({ length: 60 }, (_, i) => `w${i}`).join(" ");
    const undroppable = [
      rec(1, `${longTail} a b`, 60, 62, "metaphor"),
      rec(2, `${longTail} c d`, 60, 62, "literal"),
    ];
    expect(() => extract(TOY, "pretrained", 0, undroppable, join(tmp(), "x.apf"))).toThrow(
      /header-only/,
    );
    expect(() =>
      extract(TOY, "pretrained", 0, [BASE[0], BASE[2]], join(tmp(), "x.apf")),
    ).toThrow(/2 label classes, got 1/);
  });

  it("rejects unknown model ids, naming the known ones", () => {
    expect(() => resolveModel("bert-base-uncased")).toThrow(/known: toy, toy-deep/);
  });
});

describe("cross-language reader", () => {
  it("a reference-implementation reader accepts extracted files", () => {
    const path = join(tmp(), "set.apf");
    extract(TOY, "pretrained", 3, BASE, path);
    const script =
      "import sys, json\n" +
      "from metaprobe.apf import read_activation_set\n" +
      "with read_activation_set(sys.argv[1]) as r:\n" +
      "    print(json.dumps({'n': len(r), 'ids': r.example_ids().tolist(),\n" +
      "                      'labels': r.labels().tolist(),\n" +
      "                      'L': r.header.num_layers,\n" +
      "                      'mode': r.header.metadata['weights_mode']}))\n";
    const out = JSON.parse(execFileSync("python3", ["-c", script, path], { encoding: "utf-8" }));
    expect(out).toEqual({ n: 4, ids: [1, 2, 3, 4], labels: [1, 0, 1, 0], L: 5, mode: "pretrained" });
  });
});
