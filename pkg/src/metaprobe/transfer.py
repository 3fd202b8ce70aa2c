"""Edge-probing runs with seed averaging and cross-distribution
(source x target) transfer matrices.

Every cell of a matrix trains only on the source's train split and
tests only on the target's test split, with identical seeds, config,
and train size across cells; pretrained and randomized representations
of the same distribution are separate activation sets distinguished by
``weights_mode``. Cells are independent jobs run on a bounded worker
pool; results are deterministic regardless of scheduling.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

from .errors import ConfigurationError, LeakageError
from .probe import ProbeConfig, ProbeDataset, evaluate_accuracy, train_probe

PRETRAINED = "pretrained"
RANDOMIZED = "randomized"
WEIGHTS_MODES = (PRETRAINED, RANDOMIZED)

DEFAULT_SEEDS = (0, 1, 2)


@dataclass(frozen=True)
class DistributionKey:
    dataset: str
    lang: str
    encoder: str
    weights_mode: str

    def validate(self):
        if not (self.dataset and self.lang and self.encoder):
            raise ConfigurationError(f"empty tag in {self}")
        if self.weights_mode not in WEIGHTS_MODES:
            raise ConfigurationError(
                f"weights_mode must be one of {WEIGHTS_MODES}, "
                f"got {self.weights_mode!r}")

    @property
    def identity(self) -> Tuple[str, str, str]:
        """The distribution regardless of weights mode."""
        return (self.dataset, self.lang, self.encoder)

    def label(self) -> str:
        return "/".join(self.identity)


@dataclass
class EdgeProbeResult:
    mean_accuracy: float
    per_seed: dict            # seed -> test accuracy
    seeds: tuple
    reports: list = field(default_factory=list)
    params: list = field(default_factory=list)   # filled on request only


@dataclass
class TransferMatrix:
    sources: list             # distribution identities, row order
    targets: list             # distribution identities, column order
    seeds: tuple
    cells: dict               # (source_id, target_id, weights_mode) -> EdgeProbeResult


def check_id_disjoint(train: ProbeDataset, test: ProbeDataset):
    overlap = set(train.example_ids.tolist()) & set(test.example_ids.tolist())
    if overlap:
        sample = sorted(overlap)[:5]
        raise LeakageError(
            f"{len(overlap)} example ids shared between train and test "
            f"(e.g. {sample})")


def run_edge_probe(train: ProbeDataset, test: ProbeDataset,
                   config: ProbeConfig, seeds: Sequence[int] = DEFAULT_SEEDS,
                   check_leakage: bool = True,
                   return_params: bool = False) -> EdgeProbeResult:
    """Train one probe per seed on the train set and average test accuracy.

    ``check_leakage`` must stay on whenever train and test come from the
    same distribution.
    """
    if check_leakage:
        check_id_disjoint(train, test)
    per_seed = {}
    reports = []
    kept_params = []
    for seed in seeds:
        params, report = train_probe(train, config, seed=seed)
        acc = evaluate_accuracy(params, test, config)
        report.test_accuracy = acc
        per_seed[int(seed)] = acc
        reports.append(report)
        if return_params:
            kept_params.append(params)
    mean = sum(per_seed.values()) / len(per_seed)
    return EdgeProbeResult(mean_accuracy=mean, per_seed=per_seed,
                           seeds=tuple(int(s) for s in seeds),
                           reports=reports, params=kept_params)


def run_transfer_matrix(sets: Dict[DistributionKey, Tuple[ProbeDataset, ProbeDataset]],
                        config: ProbeConfig,
                        seeds: Sequence[int] = DEFAULT_SEEDS,
                        max_workers: int = 4) -> TransferMatrix:
    """All (source, target) cells for both weights modes.

    ``sets`` maps each DistributionKey to its (train, test) datasets;
    every distribution must appear in both pretrained and randomized
    form, and all train sets must be pre-equalized in size by the
    caller (the subsampling step is deliberately explicit).
    """
    for key in sets:
        key.validate()
    identities = []
    for key in sets:
        if key.identity not in identities:
            identities.append(key.identity)
    by_mode = {}
    for key, pair in sets.items():
        by_mode[(key.identity, key.weights_mode)] = pair
    for identity in identities:
        for mode in WEIGHTS_MODES:
            if (identity, mode) not in by_mode:
                raise ConfigurationError(
                    f"distribution {'/'.join(identity)} is missing its "
                    f"{mode} counterpart")
    train_sizes = {len(pair[0]) for pair in sets.values()}
    if len(train_sizes) > 1:
        raise ConfigurationError(
            f"train sets are not size-equalized: {sorted(train_sizes)}; "
            "subsample before building the matrix")

    jobs = []
    for mode in WEIGHTS_MODES:
        for src in identities:
            for tgt in identities:
                jobs.append((src, tgt, mode))

    def run_cell(job):
        src, tgt, mode = job
        train = by_mode[(src, mode)][0]
        test = by_mode[(tgt, mode)][1]
        return run_edge_probe(train, test, config, seeds=seeds,
                              check_leakage=(src == tgt))

    cells = {}
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for job, result in zip(jobs, pool.map(run_cell, jobs)):
            src, tgt, mode = job
            cells[(src, tgt, mode)] = result
    return TransferMatrix(sources=list(identities), targets=list(identities),
                          seeds=tuple(int(s) for s in seeds), cells=cells)
