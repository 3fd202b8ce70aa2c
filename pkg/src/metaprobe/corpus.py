"""Canonical labeled examples: loading, balancing, splitting, subsampling.

The canonical interchange file is newline-delimited UTF-8, one JSON
object per line with fields: id, text, span_start, span_end, label,
lang, dataset, source_domain, target_domain (last two optional).

Balancing happens before splitting, then splits are stratified per
class, so every split is label-balanced within +-1 and chance level is
1/K everywhere. All operations are pure and deterministic for a fixed
seed.
"""

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CorpusError
from .seeding import rng_for

REQUIRED_FIELDS = ("id", "text", "span_start", "span_end", "label",
                   "lang", "dataset")


@dataclass(frozen=True)
class LabeledExample:
    id: int
    text: str
    span_start: int
    span_end: int
    label_name: str
    label_index: int
    lang: str
    dataset: str
    source_domain: Optional[str] = None
    target_domain: Optional[str] = None


@dataclass
class CorpusSplits:
    train: list
    dev: list
    test: list
    seed: int
    ratios: tuple
    label_map: dict = field(default_factory=dict)

    def sizes(self):
        return len(self.train), len(self.dev), len(self.test)


def build_label_map(label_names: Sequence[str]) -> dict:
    """Stable label -> index assignment (sorted label names)."""
    return {name: i for i, name in enumerate(sorted(set(label_names)))}


def load_examples(path) -> list:
    """Parse a canonical record file into validated LabeledExamples.

    Keeps file order. Raises CorpusError with the offending line number
    or example id.
    """
    raw = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {e}") from e
            missing = [k for k in REQUIRED_FIELDS if k not in obj]
            if missing:
                raise CorpusError(
                    f"{path}:{lineno}: missing fields {missing}")
            raw.append((lineno, obj))

    label_map = build_label_map([obj["label"] for _, obj in raw])
    examples = []
    seen_ids = set()
    for lineno, obj in raw:
        ex_id = int(obj["id"])
        if ex_id in seen_ids:
            raise CorpusError(f"{path}:{lineno}: duplicate id {ex_id}")
        seen_ids.add(ex_id)
        words = obj["text"].split()
        start, end = int(obj["span_start"]), int(obj["span_end"])
        if not (0 <= start < end <= len(words)):
            raise CorpusError(
                f"example id {ex_id}: span [{start}, {end}) out of bounds "
                f"for {len(words)} words")
        examples.append(LabeledExample(
            id=ex_id, text=obj["text"], span_start=start, span_end=end,
            label_name=obj["label"], label_index=label_map[obj["label"]],
            lang=obj["lang"], dataset=obj["dataset"],
            source_domain=obj.get("source_domain"),
            target_domain=obj.get("target_domain")))
    return examples


def save_examples(examples: Sequence[LabeledExample], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            obj = {
                "id": ex.id, "text": ex.text,
                "span_start": ex.span_start, "span_end": ex.span_end,
                "label": ex.label_name, "lang": ex.lang,
                "dataset": ex.dataset,
            }
            if ex.source_domain is not None:
                obj["source_domain"] = ex.source_domain
            if ex.target_domain is not None:
                obj["target_domain"] = ex.target_domain
            f.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def _split_counts(total: int, ratios: Sequence[float]) -> list:
    """Integer split sizes summing to total, largest-remainder rounding."""
    exact = [total * r for r in ratios]
    counts = [int(x) for x in exact]
    remainder = total - sum(counts)
    fracs = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in fracs[:remainder]:
        counts[i] += 1
    return counts


def balance_and_split(examples: Sequence[LabeledExample],
                      ratios: Sequence[float],
                      seed: int) -> CorpusSplits:
    """Downsample majority classes to the minority count, then split.

    Splitting is per-class stratified with the given ratios, so every
    split keeps the class balance exactly.
    """
    ratios = tuple(float(r) for r in ratios)
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"ratios must be positive and sum to 1, got {ratios}")
    by_class = {}
    for ex in examples:
        by_class.setdefault(ex.label_name, []).append(ex)
    if len(by_class) < 2:
        raise CorpusError(
            f"need >= 2 classes, got {sorted(by_class)}")
    for name, members in by_class.items():
        if not members:
            raise CorpusError(f"class {name!r} has 0 examples")

    minority = min(len(m) for m in by_class.values())
    parts = [[] for _ in ratios]
    for name in sorted(by_class):
        members = by_class[name]
        rng = rng_for(seed, "balance", name)
        if len(members) > minority:
            keep_idx = rng.choice(len(members), size=minority, replace=False)
            members = [members[i] for i in sorted(keep_idx)]
        order = rng_for(seed, "split", name).permutation(len(members))
        shuffled = [members[i] for i in order]
        counts = _split_counts(minority, ratios)
        pos = 0
        for part, c in zip(parts, counts):
            part.extend(shuffled[pos:pos + c])
            pos += c
    # deterministic within-split shuffle so splits are not class-sorted
    for i, part in enumerate(parts):
        order = rng_for(seed, "mix", i).permutation(len(part))
        parts[i] = [part[j] for j in order]

    label_map = build_label_map(sorted(by_class))
    train, dev, test = (parts + [[], [], []])[:3]
    return CorpusSplits(train=train, dev=dev, test=test, seed=seed,
                        ratios=ratios, label_map=label_map)


def subsample_train(splits: CorpusSplits, n: int, seed: int) -> CorpusSplits:
    """Class-stratified uniform subsample of the train split to exactly n.

    Dev and test are untouched. Used to equalize train sizes across
    distributions before transfer runs.
    """
    current = len(splits.train)
    if n > current:
        raise CorpusError(
            f"requested train size {n} exceeds current train size {current}")
    if n == current:
        return CorpusSplits(train=list(splits.train), dev=list(splits.dev),
                            test=list(splits.test), seed=splits.seed,
                            ratios=splits.ratios,
                            label_map=dict(splits.label_map))
    by_class = {}
    for ex in splits.train:
        by_class.setdefault(ex.label_name, []).append(ex)
    names = sorted(by_class)
    targets = _split_counts(n, [len(by_class[c]) / current for c in names])
    kept = []
    for name, target in zip(names, targets):
        members = by_class[name]
        rng = rng_for(seed, "subsample", name)
        keep_idx = rng.choice(len(members), size=target, replace=False)
        kept.extend(members[i] for i in sorted(keep_idx))
    order = rng_for(seed, "subsample", "mix").permutation(len(kept))
    kept = [kept[i] for i in order]
    return CorpusSplits(train=kept, dev=list(splits.dev),
                        test=list(splits.test), seed=splits.seed,
                        ratios=splits.ratios,
                        label_map=dict(splits.label_map))


def stratified_subsample_indices(labels, n: int, seed: int) -> np.ndarray:
    """Array version of the train subsample: positions into ``labels``.

    Same per-class largest-remainder allocation as subsample_train, for
    datasets that live as label arrays rather than example lists. The
    returned positions are sorted, so the original record order is kept.
    """
    labels = np.asarray(labels)
    current = len(labels)
    if n > current:
        raise CorpusError(
            f"requested train size {n} exceeds current train size {current}")
    if n == current:
        return np.arange(current)
    classes = np.unique(labels)
    targets = _split_counts(
        n, [np.count_nonzero(labels == c) / current for c in classes])
    kept = []
    for c, target in zip(classes, targets):
        positions = np.flatnonzero(labels == c)
        rng = rng_for(seed, "subsample", str(int(c)))
        keep_idx = rng.choice(len(positions), size=target, replace=False)
        kept.extend(positions[i] for i in keep_idx)
    return np.array(sorted(kept), dtype=np.int64)


def splits_to_json(splits: CorpusSplits) -> dict:
    return {
        "seed": splits.seed,
        "ratios": list(splits.ratios),
        "label_map": splits.label_map,
        "train": [ex.id for ex in splits.train],
        "dev": [ex.id for ex in splits.dev],
        "test": [ex.id for ex in splits.test],
    }


def save_splits(splits: CorpusSplits, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(splits_to_json(splits), f, indent=2, sort_keys=True)
        f.write("\n")


def load_split_ids(path) -> dict:
    """Read a splits JSON document back as {split_name: [ids], ...}."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    for key in ("train", "dev", "test"):
        if key not in doc:
            raise CorpusError(f"{path}: missing split {key!r}")
    return doc
