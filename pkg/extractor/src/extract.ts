/** Canonical records -> APF1 activation file for one encoder + mode.
 *
 * Truncation protects the labeled span: a sentence over the model's max
 * length is truncated only when the span's subtokens all survive;
 * otherwise the record is dropped and counted. Both outcomes land in
 * the output metadata so a converted corpus is auditable.
 */

import { ApfRecord, makeHeader, writeActivationSet } from "./apf.js";
import { CanonicalRecord } from "./canonical.js";
import { ModelSpec, WeightsMode, encodeTokens, spanTensor } from "./encoder.js";
import { FormatError } from "./errors.js";
import { alignSpans, spanToSubtokens, words } from "./tokenize.js";

export interface ExtractResult {
  written: number;
  truncated: number;
  dropped: number;
  labelMap: Record<string, number>;
}

export function buildLabelMap(records: CanonicalRecord[]): Record<string, number> {
  const names = [...new Set(records.map((r) => r.label))].sort();
  const map: Record<string, number> = {};
  names.forEach((name, i) => (map[name] = i));
  return map;
}

export function extract(
  spec: ModelSpec,
  mode: WeightsMode,
  seed: number,
  records: CanonicalRecord[],
  outPath: string,
): ExtractResult {
  const labelMap = buildLabelMap(records);
  const numClasses = Object.keys(labelMap).length;
  if (numClasses < 2) {
    throw new FormatError(`need >= 2 label classes, got ${numClasses}`);
  }

  const out: ApfRecord[] = [];
  let truncated = 0;
  let dropped = 0;
  for (const rec of records) {
    const map = alignSpans(words(rec.text));
    const [spanStart, spanEnd] = spanToSubtokens(map, rec.span_start, rec.span_end);
    let subtokens = map.subtokens;
    if (subtokens.length > spec.maxLen) {
      if (spanEnd <= spec.maxLen) {
        subtokens = subtokens.slice(0, spec.maxLen);
        truncated += 1;
      } else {
        dropped += 1;
        continue;
      }
    }
    const rows = encodeTokens(spec, mode, seed, subtokens);
    out.push({
      exampleId: rec.id,
      label: labelMap[rec.label],
      spanLen: spanEnd - spanStart,
      tensor: spanTensor(rows, spec.hidden, spanStart, spanEnd),
    });
  }
  if (out.length === 0) {
    throw new FormatError("no records survived extraction; refusing to write a header-only file");
  }

  const first = records[0];
  const header = makeHeader({
    numLayers: spec.layers + 1, // embedding row plus each block
    hiddenDim: spec.hidden,
    numClasses,
    numExamples: out.length,
    metadata: {
      encoder: spec.id,
      weights_mode: mode,
      seed,
      dataset: first.dataset,
      lang: first.lang,
      label_map: labelMap,
      truncated,
      dropped,
    },
  });
  writeActivationSet(header, out, outPath);
  return { written: out.length, truncated, dropped, labelMap };
}
