import { existsSync, mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { readActivationSet } from "../src/apf.js";
import { loadRecords } from "../src/canonical.js";
import { runCli } from "../src/cli.js";

const LCC = [
  "id\tlang\tsentence\tstart\tend\tscore",
  "1\ten\tthe economy is a fragile machine\t4\t6\t3",
  "2\ten\tthe printer is a fragile machine\t4\t6\t0",
  "3\ten\this words cut deep\t2\t3\t2",
  "4\ten\tthe river flowed east\t2\t3\t0",
].join("\n");

let stdout: string[];
let stderr: string[];

beforeEach(() => {
  stdout = [];
  stderr = [];
  vi.spyOn(process.stdout, "write").mockImplementation((chunk) => {
    stdout.push(String(chunk));
    return true;
  });
  vi.spyOn(process.stderr, "write").mockImplementation((chunk) => {
    stderr.push(String(chunk));
    return true;
  });
});

afterEach(() => {
  vi.restoreAllMocks();
});

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "cli-"));
}

describe("cli", () => {
  it("converts and extracts end to end", () => {
    const dir = tmp();
    const raw = join(dir, "lcc.tsv");
    writeFileSync(raw, LCC);
    const jsonl = join(dir, "records.jsonl");
    expect(runCli(["convert", "--dataset", "lcc", "--in", raw, "--out", jsonl])).toBe(0);
    expect(loadRecords(jsonl).length).toBe(4);
    const summary = JSON.parse(stdout.join("").split("summary ")[1]);
    expect(summary.records).toBe(4);

    const apf = join(dir, "set.apf");
    expect(
      runCli([
        "extract",
        "--model",
        "toy",
        "--mode",
        "randomized",
        "--seed",
        "2",
        "--in",
        jsonl,
        "--out",
        apf,
      ]),
    ).toBe(0);
    expect(existsSync(apf)).toBe(true);
    const reader = readActivationSet(apf);
    expect(reader.length).toBe(4);
    expect(reader.header.metadata.weights_mode).toBe("randomized");
    expect(reader.header.metadata.seed).toBe(2);
  });

  it("exits 2 on usage errors with a single-line JSON diagnostic", () => {
    expect(runCli([])).toBe(2);
    expect(runCli(["frobnicate"])).toBe(2);
    expect(runCli(["convert", "--dataset", "lcc", "--bogus-flag", "x"])).toBe(2);
    expect(runCli(["convert", "--dataset", "nope", "--in", "a", "--out", "b"])).toBe(2);
    expect(runCli(["extract", "--model", "toy", "--mode", "sideways", "--in", "a", "--out", "b"])).toBe(2);
    for (const line of stderr) {
      const doc = JSON.parse(line.trim()); // every diagnostic is one JSON line
      expect(doc.kind).toBe("usage");
      expect(doc.error.length).toBeGreaterThan(0);
    }
  });

  it("exits 3 when an input file is missing, naming it", () => {
    const gone = join(tmp(), "gone.tsv");
    expect(runCli(["convert", "--dataset", "lcc", "--in", gone, "--out", "x.jsonl"])).toBe(3);
    const doc = JSON.parse(stderr.join("").trim());
    expect(doc.kind).toBe("io");
    expect(doc.error).toContain("gone.tsv");
  });

  it("exits 4 on malformed input rows, naming the row", () => {
    const dir = tmp();
    const raw = join(dir, "bad.tsv");
    writeFileSync(raw, "id\tlang\tsentence\tstart\tend\tscore\n9\ten\tsome text\tz\t1\t0");
    expect(runCli(["convert", "--dataset", "lcc", "--in", raw, "--out", join(dir, "x.jsonl")])).toBe(4);
    const doc = JSON.parse(stderr.join("").trim());
    expect(doc.kind).toBe("format");
    expect(doc.error).toMatch(/row 2/);
  });

  it("prints usage on --help and exits 0", () => {
    expect(runCli(["--help"])).toBe(0);
    expect(stdout.join("")).toContain("apf-extractor convert");
  });
});
