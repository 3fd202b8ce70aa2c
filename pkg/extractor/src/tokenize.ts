/** Whitespace words -> subtokens, plus the word-to-subtoken alignment
 * the activation records are built from.
 *
 * The subtokenizer is deliberately simple and fully deterministic:
 * lowercase, keep [a-z0-9], chunk into pieces of at most 4 characters.
 * A word that leaves nothing behind (pure punctuation) has no subtokens
 * and cannot be aligned — that is an error naming the word index, not a
 * silent drop, because a span that includes it would silently shrink.
 */

import { AlignmentError } from "./errors.js";

export const MAX_PIECE_LEN = 4;

export function words(text: string): string[] {
  return text.split(/\s+/).filter((w) => w.length > 0);
}

export function subtokenize(word: string): string[] {
  const core = word.toLowerCase().replace(/[^a-z0-9]/g, "");
  const pieces: string[] = [];
  for (let i = 0; i < core.length; i += MAX_PIECE_LEN) {
    pieces.push(core.slice(i, i + MAX_PIECE_LEN));
  }
  return pieces;
}

export interface AlignmentMap {
  /** ranges[w] = [start, end) subtoken indices of word w; ranges tile
   * [0, subtokens.length) in order, every word covering >= 1 slot. */
  ranges: Array<[number, number]>;
  subtokens: string[];
}

export function alignSpans(wordList: string[]): AlignmentMap {
  const ranges: Array<[number, number]> = [];
  const subtokens: string[] = [];
  for (let w = 0; w < wordList.length; w++) {
    const pieces = subtokenize(wordList[w]);
    if (pieces.length === 0) {
      throw new AlignmentError(
        `word ${w} (${JSON.stringify(wordList[w])}) has no subtokens`,
        w,
      );
    }
    ranges.push([subtokens.length, subtokens.length + pieces.length]);
    subtokens.push(...pieces);
  }
  return { ranges, subtokens };
}

/** Word span [a, b) -> its subtoken span [start, end). */
export function spanToSubtokens(map: AlignmentMap, a: number, b: number): [number, number] {
  if (a < 0 || b > map.ranges.length || a >= b) {
    throw new RangeError(`word span [${a}, ${b}) invalid for ${map.ranges.length} words`);
  }
  return [map.ranges[a][0], map.ranges[b - 1][1]];
}
