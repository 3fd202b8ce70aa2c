"""Online-coding MDL estimation and layer-wise compression curves.

The codelength of a label sequence is the uniform cost of the first
portion plus, for each later portion, the cost of coding its labels
under a probe trained from scratch on everything before it. Compression
is N*log2(K) divided by that total: 1 for an uninformative coder,
larger when the representations carry label information.

Block costs are accumulated sequentially in float64; the coding loop
evaluates one record at a time so the total is reproducible bit-for-bit
by the naive re-computation below.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionMismatchError, MetaprobeError
from .probe import (ProbeConfig, ProbeDataset, _forward_batch, loss_bits,
                    train_probe)
from .seeding import derive_seed, rng_for

DEFAULT_FRACTIONS = (0.001, 0.002, 0.004, 0.008, 0.016, 0.032,
                     0.0625, 0.125, 0.25, 0.5, 1.0)


@dataclass(frozen=True)
class PortionSchedule:
    boundaries: tuple      # strictly increasing example counts, last == N
    fractions: tuple       # source fractions
    num_examples: int

    def validate(self):
        b = self.boundaries
        if len(b) < 1 or b[0] < 1 or b[-1] != self.num_examples:
            raise ConfigurationError(
                f"invalid boundaries {b} for N={self.num_examples}")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise ConfigurationError(f"boundaries not strictly increasing: {b}")


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_schedule(num_examples: int,
                  fractions: Sequence[float] = DEFAULT_FRACTIONS
                  ) -> PortionSchedule:
    """Portion boundaries from fractions of N (rounded half away from
    zero, clamped to [1, N], duplicates collapsed)."""
    if num_examples < 10:
        raise ConfigurationError(
            f"online coding needs N >= 10, got {num_examples}")
    fractions = tuple(sorted(float(f) for f in fractions))
    if not fractions or any(f <= 0 for f in fractions):
        raise ConfigurationError(f"fractions must be positive, got {fractions}")
    boundaries = sorted({
        min(max(_round_half_away(f * num_examples), 1), num_examples)
        for f in fractions})
    if boundaries[-1] != num_examples:
        raise ConfigurationError(
            f"fractions {fractions} never reach the full set of "
            f"{num_examples} examples; include 1.0")
    if len(boundaries) < 2:
        raise ConfigurationError(
            f"N={num_examples} yields a single boundary {boundaries}; "
            "need >= 2 distinct portions")
    schedule = PortionSchedule(boundaries=tuple(boundaries),
                               fractions=fractions,
                               num_examples=num_examples)
    schedule.validate()
    return schedule


def degenerate_schedule(num_examples: int) -> PortionSchedule:
    """The single-boundary schedule {N}: pure uniform coding."""
    return PortionSchedule(boundaries=(num_examples,), fractions=(1.0,),
                           num_examples=num_examples)


@dataclass
class MDLReport:
    num_examples: int
    num_classes: int
    schedule: PortionSchedule
    uniform_cost_bits: float
    block_codelengths_bits: list
    total_mdl_bits: float
    compression: float
    seed: int


def compression(total_mdl_bits: float, num_examples: int,
                num_classes: int) -> float:
    if total_mdl_bits <= 0:
        raise MetaprobeError(
            f"total MDL must be positive, got {total_mdl_bits}")
    return num_examples * math.log2(num_classes) / total_mdl_bits


def portion_seed(seed: int, portion_index: int) -> int:
    """Fresh probe initialization seed for one portion (prevents
    information leakage between portions)."""
    return derive_seed(seed, "portion", portion_index)


def online_coding(data: ProbeDataset, config: ProbeConfig,
                  schedule: PortionSchedule, seed: int) -> MDLReport:
    """Online-coding total over a dataset already in transmission order.

    The caller is responsible for shuffling ``data`` with the run seed.
    Each portion trains a probe from a fresh seeded initialization on
    the prefix, then codes the next block one record at a time.
    """
    schedule.validate()
    if len(data) != schedule.num_examples:
        raise DimensionMismatchError(
            f"schedule is for N={schedule.num_examples} but data has "
            f"{len(data)} records")
    k = data.num_classes
    bounds = schedule.boundaries
    uniform_cost = bounds[0] * math.log2(k)
    # the grand total accumulates record-by-record in transmission
    # order (not as a sum of block subtotals): float addition is not
    # associative, and the sequential sum is the quantity a one-pass
    # coder would produce
    total = uniform_cost
    blocks = []
    for i in range(len(bounds) - 1):
        t_cur, t_next = bounds[i], bounds[i + 1]
        prefix = ProbeDataset(data.means[:t_cur], data.labels[:t_cur],
                              data.example_ids[:t_cur], k)
        try:
            params, _ = train_probe(prefix, config, seed=portion_seed(seed, i))
        except MetaprobeError as e:
            raise type(e)(f"portion {i} (train size {t_cur}): {e}") from e
        block = 0.0
        for j in range(t_cur, t_next):
            probs, _ = _forward_batch(params, data.means[j:j + 1], config)
            cost = loss_bits(probs[0], data.labels[j])
            block += cost
            total += cost
        blocks.append(block)
    return MDLReport(num_examples=len(data), num_classes=k,
                     schedule=schedule, uniform_cost_bits=uniform_cost,
                     block_codelengths_bits=blocks, total_mdl_bits=total,
                     compression=compression(total, len(data), k), seed=seed)


def naive_online_coding_total(data: ProbeDataset, config: ProbeConfig,
                              boundaries: Sequence[int], seed: int) -> float:
    """Brute-force re-computation of the online-coding total.

    Deliberately bypasses the schedule/report machinery: walks the
    boundary list directly, retrains per prefix, and sums per-record
    codelengths. Must match ``online_coding(...).total_mdl_bits``
    bit-for-bit on any instance.
    """
    k = data.num_classes
    total = boundaries[0] * math.log2(k)
    for i in range(len(boundaries) - 1):
        t_cur, t_next = boundaries[i], boundaries[i + 1]
        prefix = ProbeDataset(data.means[:t_cur], data.labels[:t_cur],
                              data.example_ids[:t_cur], k)
        params, _ = train_probe(prefix, config, seed=portion_seed(seed, i))
        for j in range(t_cur, t_next):
            probs, _ = _forward_batch(params, data.means[j:j + 1], config)
            total += loss_bits(probs[0], data.labels[j])
    return total


@dataclass
class LayerCurve:
    compressions: list      # per-layer compression, index = layer
    best_layer: int         # argmax, ties toward the lower index
    reports: list           # per-layer MDLReport


def shuffled_order(n: int, seed: int) -> np.ndarray:
    """Transmission order used by MDL runs (one seeded shuffle)."""
    return rng_for(seed, "order").permutation(n)


def layerwise_compression(data: ProbeDataset, config: ProbeConfig,
                          seed: int,
                          fractions: Sequence[float] = DEFAULT_FRACTIONS,
                          layers: Optional[Sequence[int]] = None) -> LayerCurve:
    """Online coding once per layer with a single-layer probe.

    Data order and per-portion seeds are identical across layers, so
    curves are comparable; each layer's value is independent of which
    other layers are probed.
    """
    num_layers = data.num_layers
    if layers is None:
        layers = range(num_layers)
    order = shuffled_order(len(data), seed)
    ordered = data.subset(order)
    schedule = make_schedule(len(data), fractions)
    reports = [None] * num_layers
    compressions = [float("nan")] * num_layers
    for layer in layers:
        layer_config = replace(config, layer_mode=int(layer))
        try:
            report = online_coding(ordered, layer_config, schedule, seed)
        except MetaprobeError as e:
            raise type(e)(f"layer {layer}: {e}") from e
        reports[layer] = report
        compressions[layer] = report.compression
    probed = [c for c in compressions if not math.isnan(c)]
    if not probed:
        raise ConfigurationError("no layers probed")
    best_layer = int(np.nanargmax(compressions))
    return LayerCurve(compressions=compressions, best_layer=best_layer,
                      reports=reports)
