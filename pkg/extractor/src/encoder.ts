/** Frozen span encoders with two weight modes.
 *
 * `pretrained` weights are a pure function of the model id (a stable
 * stand-in for loading a published checkpoint); `randomized`
 * reinitializes every weight from the run seed while keeping the
 * architecture, so the two modes share shapes, token counts, ids, and
 * labels and differ only in the representations.
 *
 * The built-in models are small deterministic stand-ins with the real
 * models' interface: L = layers + 1 output rows per token (embedding
 * row included), fixed hidden size, a max sequence length. A real
 * encoder drops in behind `encodeTokens` without touching the format.
 */

import { FormatError } from "./errors.js";
import { Rng, rngFor } from "./rng.js";

export interface ModelSpec {
  id: string;
  layers: number; // transformer-style blocks; output rows = layers + 1
  hidden: number;
  maxLen: number;
}

export const MODELS: Record<string, ModelSpec> = {
  toy: { id: "toy", layers: 4, hidden: 16, maxLen: 48 },
  "toy-deep": { id: "toy-deep", layers: 12, hidden: 24, maxLen: 64 },
};

export const WEIGHTS_MODES = ["pretrained", "randomized"] as const;
export type WeightsMode = (typeof WEIGHTS_MODES)[number];

export function resolveModel(id: string): ModelSpec {
  const spec = MODELS[id];
  if (!spec) {
    throw new FormatError(
      `unknown model ${JSON.stringify(id)}; known: ${Object.keys(MODELS).join(", ")}`,
    );
  }
  return spec;
}

export function weightsKey(spec: ModelSpec, mode: WeightsMode, seed: number): string {
  return mode === "pretrained"
    ? `model:${spec.id}:pretrained`
    : `model:${spec.id}:randomized:${seed}`;
}

interface LayerWeights {
  left: Float64Array; // gate on the previous token
  self: Float64Array;
  right: Float64Array; // gate on the next token
  bias: Float64Array;
}

function layerWeights(key: string, layer: number, hidden: number): LayerWeights {
  const rng = rngFor(0, key, "layer", layer);
  const draw = (scale: number, shift = 0) => {
    const arr = rng.normals(hidden);
    for (let i = 0; i < hidden; i++) arr[i] = shift + scale * arr[i];
    return arr;
  };
  return {
    left: draw(0.5),
    self: draw(0.3, 1.0), // self connection dominates: layers stay token-local-ish
    right: draw(0.5),
    bias: draw(0.1),
  };
}

function embed(key: string, subtoken: string, hidden: number): Float64Array {
  return rngFor(0, key, "embed", subtoken).normals(hidden);
}

/** All L+1 rows for every token: result[l] is row-major (T, H). */
export function encodeTokens(
  spec: ModelSpec,
  mode: WeightsMode,
  seed: number,
  subtokens: string[],
): Float64Array[] {
  const key = weightsKey(spec, mode, seed);
  const T = subtokens.length;
  const H = spec.hidden;
  const rows: Float64Array[] = [];
  const embedded = new Float64Array(T * H);
  for (let t = 0; t < T; t++) {
    embedded.set(embed(key, subtokens[t], H), t * H);
  }
  rows.push(embedded);
  let prev = embedded;
  for (let l = 1; l <= spec.layers; l++) {
    const w = layerWeights(key, l, H);
    const out = new Float64Array(T * H);
    for (let t = 0; t < T; t++) {
      for (let i = 0; i < H; i++) {
        const leftVal = t > 0 ? prev[(t - 1) * H + i] : 0;
        const rightVal = t + 1 < T ? prev[(t + 1) * H + i] : 0;
        out[t * H + i] = Math.tanh(
          w.left[i] * leftVal + w.self[i] * prev[t * H + i] + w.right[i] * rightVal + w.bias[i],
        );
      }
    }
    rows.push(out);
    prev = out;
  }
  return rows;
}

/** Flat (L+1, span, H) layer-major float32 tensor for one span. */
export function spanTensor(
  rows: Float64Array[],
  hidden: number,
  start: number,
  end: number,
): Float32Array {
  const span = end - start;
  const L = rows.length;
  const out = new Float32Array(L * span * hidden);
  for (let l = 0; l < L; l++) {
    for (let t = 0; t < span; t++) {
      for (let i = 0; i < hidden; i++) {
        out[(l * span + t) * hidden + i] = rows[l][(start + t) * hidden + i];
      }
    }
  }
  return out;
}

export { Rng };
