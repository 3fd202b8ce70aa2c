export class UsageError extends Error {}

export class FormatError extends Error {}

/** Damage in a binary file, locating the offending byte offset. */
export class CorruptionError extends Error {
  readonly offset: number;

  constructor(message: string, offset: number) {
    super(message);
    this.offset = offset;
  }
}

/** Bad row in a raw dataset file, locating the offending row number. */
export class RowError extends Error {
  readonly row: number;

  constructor(message: string, row: number) {
    super(message);
    this.row = row;
  }
}

export class AlignmentError extends Error {
  readonly wordIndex: number;

  constructor(message: string, wordIndex: number) {
    super(message);
    this.wordIndex = wordIndex;
  }
}
