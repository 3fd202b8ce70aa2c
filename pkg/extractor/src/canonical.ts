/** Canonical labeled-span records: the interchange format between
 * dataset conversion and activation extraction.
 *
 * One JSON object per line, UTF-8: id, text, span_start, span_end,
 * label, lang, dataset, plus optional source_domain / target_domain.
 * Spans index whitespace tokens of `text`, end-exclusive.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { FormatError } from "./errors.js";

export interface CanonicalRecord {
  id: number;
  text: string;
  span_start: number;
  span_end: number;
  label: string;
  lang: string;
  dataset: string;
  source_domain?: string;
  target_domain?: string;
}

const REQUIRED = ["id", "text", "span_start", "span_end", "label", "lang", "dataset"] as const;

export function validateRecord(rec: CanonicalRecord, where: string): void {
  const words = rec.text.split(/\s+/).filter((w) => w.length > 0);
  if (
    !Number.isInteger(rec.span_start) ||
    !Number.isInteger(rec.span_end) ||
    rec.span_start < 0 ||
    rec.span_end > words.length ||
    rec.span_start >= rec.span_end
  ) {
    throw new FormatError(
      `${where}: span [${rec.span_start}, ${rec.span_end}) invalid for ${words.length} words`,
    );
  }
  if (!rec.label) throw new FormatError(`${where}: empty label`);
}

export function serializeRecords(records: CanonicalRecord[]): string {
  const lines = records.map((rec) => {
    const doc: Record<string, unknown> = {
      id: rec.id,
      text: rec.text,
      span_start: rec.span_start,
      span_end: rec.span_end,
      label: rec.label,
      lang: rec.lang,
      dataset: rec.dataset,
    };
    if (rec.source_domain !== undefined) doc.source_domain = rec.source_domain;
    if (rec.target_domain !== undefined) doc.target_domain = rec.target_domain;
    return JSON.stringify(doc);
  });
  return lines.join("\n") + (lines.length ? "\n" : "");
}

export function writeRecords(records: CanonicalRecord[], path: string): void {
  writeFileSync(path, serializeRecords(records), "utf-8");
}

export function parseRecords(text: string, source: string): CanonicalRecord[] {
  const out: CanonicalRecord[] = [];
  const seen = new Set<number>();
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    const where = `${source}:${i + 1}`;
    let doc: Record<string, unknown>;
    try {
      doc = JSON.parse(line);
    } catch (e) {
      throw new FormatError(`${where}: malformed JSON: ${e}`);
    }
    const missing = REQUIRED.filter((k) => !(k in doc));
    if (missing.length) {
      throw new FormatError(`${where}: missing fields [${missing.join(", ")}]`);
    }
    const rec = doc as unknown as CanonicalRecord;
    if (seen.has(rec.id)) throw new FormatError(`${where}: duplicate id ${rec.id}`);
    seen.add(rec.id);
    validateRecord(rec, where);
    out.push(rec);
  }
  return out;
}

export function loadRecords(path: string): CanonicalRecord[] {
  return parseRecords(readFileSync(path, "utf-8"), path);
}
