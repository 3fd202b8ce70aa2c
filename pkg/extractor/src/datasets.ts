/** Raw metaphor-dataset layouts -> canonical records.
 *
 * Layouts handled:
 *  - lcc: TSV with header  id lang sentence start end score
 *    [source_domain target_domain]. Score 0 is literal, score 1 (weak
 *    metaphor) is dropped, scores >= 2 are metaphor; any other score is
 *    skipped and counted. Spans are word indices, end-exclusive.
 *  - trofi: TSV with header  id verb label verb_index sentence, one
 *    verb instance per row; the span covers exactly the target verb
 *    token. Labels literal / nonliteral.
 *  - vua-pos, vua-verbs: CSV with header  id,pos,word_index,label,
 *    sentence (label 1 = metaphor); vua-verbs keeps only VERB rows.
 *
 * Malformed rows raise RowError with the 1-based row number; rows that
 * are well-formed but excluded by a rule are counted, not errors.
 */

import Papa from "papaparse";

import { CanonicalRecord, validateRecord } from "./canonical.js";
import { RowError } from "./errors.js";
import { words } from "./tokenize.js";

export const DATASET_KINDS = ["lcc", "trofi", "vua-pos", "vua-verbs"] as const;
export type DatasetKind = (typeof DATASET_KINDS)[number];

export interface ConvertResult {
  records: CanonicalRecord[];
  /** kept per label, plus rule-based exclusions. */
  counts: Record<string, number>;
}

function bump(counts: Record<string, number>, key: string): void {
  counts[key] = (counts[key] ?? 0) + 1;
}

function intField(value: string, name: string, row: number): number {
  const n = Number(value);
  if (!Number.isInteger(n)) {
    throw new RowError(`row ${row}: ${name} ${JSON.stringify(value)} is not an integer`, row);
  }
  return n;
}

function tsvRows(text: string): string[][] {
  return text
    .split("\n")
    .map((line) => line.replace(/\r$/, ""))
    .filter((line) => line.length > 0)
    .map((line) => line.split("\t"));
}

function checkHeader(actual: string[], expected: string[], source: string): void {
  for (let i = 0; i < expected.length; i++) {
    if (actual[i] !== expected[i]) {
      throw new RowError(
        `${source}: header mismatch: expected ${expected.join(", ")} got ${actual.join(", ")}`,
        1,
      );
    }
  }
}

export function parseLcc(text: string, source: string): ConvertResult {
  const rows = tsvRows(text);
  if (rows.length === 0) throw new RowError(`${source}: empty file`, 1);
  checkHeader(rows[0], ["id", "lang", "sentence", "start", "end", "score"], source);
  const hasDomains = rows[0].length >= 8;
  const records: CanonicalRecord[] = [];
  const counts: Record<string, number> = {};
  for (let r = 1; r < rows.length; r++) {
    const row = rows[r];
    const rowNum = r + 1;
    if (row.length < 6) {
      throw new RowError(`row ${rowNum}: expected >= 6 columns, got ${row.length}`, rowNum);
    }
    const score = intField(row[5], "score", rowNum);
    if (score === 1) {
      bump(counts, "dropped_weak_metaphor");
      continue;
    }
    if (score < 0) {
      bump(counts, "skipped_unknown_score");
      continue;
    }
    const label = score === 0 ? "literal" : "metaphor";
    const rec: CanonicalRecord = {
      id: intField(row[0], "id", rowNum),
      text: row[2],
      span_start: intField(row[3], "start", rowNum),
      span_end: intField(row[4], "end", rowNum),
      label,
      lang: row[1],
      dataset: "lcc",
    };
    if (hasDomains && row[6]) rec.source_domain = row[6];
    if (hasDomains && row[7]) rec.target_domain = row[7];
    try {
      validateRecord(rec, `row ${rowNum}`);
    } catch (e) {
      throw new RowError(String(e instanceof Error ? e.message : e), rowNum);
    }
    records.push(rec);
    bump(counts, label);
  }
  return { records, counts };
}

export function parseTrofi(text: string, source: string): ConvertResult {
  const rows = tsvRows(text);
  if (rows.length === 0) throw new RowError(`${source}: empty file`, 1);
  checkHeader(rows[0], ["id", "verb", "label", "verb_index", "sentence"], source);
  const records: CanonicalRecord[] = [];
  const counts: Record<string, number> = {};
  for (let r = 1; r < rows.length; r++) {
    const row = rows[r];
    const rowNum = r + 1;
    if (row.length < 5) {
      throw new RowError(`row ${rowNum}: expected 5 columns, got ${row.length}`, rowNum);
    }
    const rawLabel = row[2];
    if (rawLabel !== "literal" && rawLabel !== "nonliteral") {
      throw new RowError(`row ${rowNum}: unknown label ${JSON.stringify(rawLabel)}`, rowNum);
    }
    const verbIndex = intField(row[3], "verb_index", rowNum);
    const sentence = row[4];
    const sentenceWords = words(sentence);
    if (verbIndex < 0 || verbIndex >= sentenceWords.length) {
      throw new RowError(
        `row ${rowNum}: verb_index ${verbIndex} outside sentence of ${sentenceWords.length} words`,
        rowNum,
      );
    }
    const label = rawLabel === "literal" ? "literal" : "metaphor";
    records.push({
      id: intField(row[0], "id", rowNum),
      text: sentence,
      span_start: verbIndex,
      span_end: verbIndex + 1, // exactly the target verb token
      label,
      lang: "en",
      dataset: "trofi",
    });
    bump(counts, label);
  }
  return { records, counts };
}

export function parseVua(text: string, source: string, verbsOnly: boolean): ConvertResult {
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0];
    const rowNum = (e.row ?? 0) + 2; // header is row 1
    throw new RowError(`row ${rowNum}: ${e.message}`, rowNum);
  }
  const needed = ["id", "pos", "word_index", "label", "sentence"];
  const fields = parsed.meta.fields ?? [];
  for (const name of needed) {
    if (!fields.includes(name)) {
      throw new RowError(`${source}: missing column ${JSON.stringify(name)}`, 1);
    }
  }
  const records: CanonicalRecord[] = [];
  const counts: Record<string, number> = {};
  for (let i = 0; i < parsed.data.length; i++) {
    const row = parsed.data[i];
    const rowNum = i + 2;
    if (verbsOnly && row.pos !== "VERB") {
      bump(counts, "skipped_non_verb");
      continue;
    }
    const rawLabel = intField(row.label, "label", rowNum);
    if (rawLabel !== 0 && rawLabel !== 1) {
      throw new RowError(`row ${rowNum}: label must be 0 or 1, got ${rawLabel}`, rowNum);
    }
    const wordIndex = intField(row.word_index, "word_index", rowNum);
    const sentenceWords = words(row.sentence);
    if (wordIndex < 0 || wordIndex >= sentenceWords.length) {
      throw new RowError(
        `row ${rowNum}: word_index ${wordIndex} outside sentence of ${sentenceWords.length} words`,
        rowNum,
      );
    }
    const label = rawLabel === 1 ? "metaphor" : "literal";
    records.push({
      id: intField(row.id, "id", rowNum),
      text: row.sentence,
      span_start: wordIndex,
      span_end: wordIndex + 1,
      label,
      lang: "en",
      dataset: verbsOnly ? "vua-verbs" : "vua-pos",
    });
    bump(counts, label);
  }
  return { records, counts };
}

export function convertDataset(kind: DatasetKind, text: string, source: string): ConvertResult {
  switch (kind) {
    case "lcc":
      return parseLcc(text, source);
    case "trofi":
      return parseTrofi(text, source);
    case "vua-pos":
      return parseVua(text, source, false);
    case "vua-verbs":
      return parseVua(text, source, true);
  }
}
