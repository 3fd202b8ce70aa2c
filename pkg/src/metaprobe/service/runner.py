"""Job execution behind the service API.

Every run kind resolves its inputs, records a manifest (input hashes
first), executes, and returns the list of written files plus a summary
dict. The JobStore wraps execution in a bounded worker pool for the
async HTTP flow; the CLI calls ``execute`` directly for in-process runs.
"""

import itertools
import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import errors
from ..apf import SynthSpec, read_activation_set, synth_activations, \
    write_activation_set
from ..corpus import (_split_counts, balance_and_split, load_examples,
                      load_split_ids, save_splits,
                      stratified_subsample_indices, subsample_train)
from ..mdl import (layerwise_compression, make_schedule,
                   naive_online_coding_total, online_coding, shuffled_order)
from ..probe import (ProbeConfig, ProbeDataset, _forward_batch,
                     check_gradients, init_params, save_params)
from ..reports import (LAYERS_COLUMNS, build_manifest, emit_edge_report,
                       emit_layer_curves, emit_mdl_report,
                       emit_transfer_report, layer_curves_svg,
                       read_layer_curves_csv, write_csv_report,
                       write_manifest)
from ..seeding import derive_seed, rng_for
from ..transfer import DistributionKey, run_edge_probe, run_transfer_matrix
from .schemas import (EdgeRequest, JobInfo, MdlLayersRequest, MdlRequest,
                      PrepRequest, ProbeConfigModel, ReportRequest,
                      SelftestResponse, SynthRequest, TransferRequest)

_ERROR_KINDS = (
    (errors.ManifestMismatchError, "manifest"),
    ((errors.FormatError, errors.CorruptionError, errors.CorpusError,
      errors.DimensionMismatchError), "format"),
    ((errors.ConfigurationError, errors.LeakageError, ValueError), "config"),
    (errors.TrainingDivergedError, "run"),
    ((FileNotFoundError, PermissionError, IsADirectoryError, OSError), "io"),
)


def classify_error(exc: BaseException) -> str:
    for types, kind in _ERROR_KINDS:
        if isinstance(exc, types):
            return kind
    return "internal"


def _require_file(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"input path does not exist: {path}")


def _ensure_outdir(path):
    os.makedirs(path, exist_ok=True)


def resolve_probe_config(model: ProbeConfigModel, header) -> ProbeConfig:
    if model.num_classes is not None and model.num_classes != header.num_classes:
        raise errors.ConfigurationError(
            f"config num_classes={model.num_classes} does not match "
            f"activation header K={header.num_classes}")
    return ProbeConfig(
        num_classes=header.num_classes,
        projection_dim=model.projection_dim,
        mlp_hidden_dim=model.mlp_hidden_dim,
        layer_mode=model.layer_mode,
        pooling=model.pooling,
        learning_rate=model.learning_rate,
        batch_size=model.batch_size,
        epochs=model.epochs,
    )


def _split_indices(reader, splits_path, split_names):
    """Record indices per split, resolved through example ids."""
    ids = reader.example_ids()
    id_to_index = {int(e): i for i, e in enumerate(ids)}
    doc = load_split_ids(splits_path)
    out = {}
    for name in split_names:
        indices = []
        for ex_id in doc[name]:
            if int(ex_id) not in id_to_index:
                raise errors.CorpusError(
                    f"split {name!r} references example id {ex_id} not "
                    f"present in the activation set")
            indices.append(id_to_index[int(ex_id)])
        out[name] = indices
    return out


# ---------------------------------------------------------------------------
# Per-kind executors


def _run_prep(req: PrepRequest):
    _require_file(req.examples_path)
    _ensure_outdir(req.out_dir)
    manifest = build_manifest("prep", {"examples": req.examples_path},
                              req.model_dump())
    write_manifest(manifest, req.out_dir)
    examples = load_examples(req.examples_path)
    splits = balance_and_split(examples, req.ratios, req.seed)
    if req.train_size is not None:
        splits = subsample_train(splits, req.train_size, req.seed)
    splits_path = os.path.join(req.out_dir, "splits.json")
    save_splits(splits, splits_path)
    train, dev, test = splits.sizes()
    summary = {"train": train, "dev": dev, "test": test,
               "classes": sorted(splits.label_map)}
    return [splits_path], summary


def _run_edge(req: EdgeRequest):
    _require_file(req.activations_path)
    _require_file(req.splits_path)
    _ensure_outdir(req.out_dir)
    manifest = build_manifest("edge", {"activations": req.activations_path,
                                       "splits": req.splits_path},
                              req.model_dump())
    write_manifest(manifest, req.out_dir)
    with read_activation_set(req.activations_path) as reader:
        config = resolve_probe_config(req.config, reader.header)
        metadata = reader.header.metadata
        idx = _split_indices(reader, req.splits_path, ("train", "test"))
        train = ProbeDataset.from_activation_set(reader, idx["train"])
        test = ProbeDataset.from_activation_set(reader, idx["test"])
    if req.train_size is not None:
        keep = stratified_subsample_indices(train.labels, req.train_size,
                                            req.subsample_seed)
        train = train.subset(keep)
    result = run_edge_probe(train, test, config, seeds=req.seeds,
                            return_params=req.save_params)
    mode = req.weights_mode or metadata.get("weights_mode", "unknown")
    run_id = os.path.splitext(os.path.basename(req.activations_path))[0]
    outputs = emit_edge_report(result, req.out_dir, run_id, source=run_id,
                               target=run_id, weights_mode=mode,
                               train_size=len(train), test_size=len(test))
    for seed, params in zip(result.seeds, result.params):
        path = os.path.join(req.out_dir, f"probe_seed{seed}.mpp")
        save_params(params, path)
        outputs.append(path)
    summary = {"mean_accuracy": result.mean_accuracy,
               "per_seed": {str(s): a for s, a in result.per_seed.items()},
               "train_size": len(train), "test_size": len(test)}
    return outputs, summary


def _load_mdl_data(activations_path, splits_path, split):
    _require_file(activations_path)
    inputs = {"activations": activations_path}
    with read_activation_set(activations_path) as reader:
        if splits_path is not None:
            _require_file(splits_path)
            inputs["splits"] = splits_path
            idx = _split_indices(reader, splits_path, (split,))[split]
        else:
            idx = None
        data = ProbeDataset.from_activation_set(reader, idx)
        header = reader.header
    return data, header, inputs


def _run_mdl(req: MdlRequest):
    data, header, inputs = _load_mdl_data(req.activations_path,
                                          req.splits_path, req.split)
    _ensure_outdir(req.out_dir)
    write_manifest(build_manifest("mdl", inputs, req.model_dump()),
                   req.out_dir)
    config = resolve_probe_config(req.config, header)
    schedule = make_schedule(len(data), req.fractions)
    order = shuffled_order(len(data), req.seed)
    report = online_coding(data.subset(order), config, schedule, req.seed)
    run_id = os.path.splitext(os.path.basename(req.activations_path))[0]
    outputs = emit_mdl_report(report, req.out_dir, run_id,
                              layer=req.config.layer_mode)
    summary = {"total_mdl_bits": report.total_mdl_bits,
               "compression": report.compression,
               "num_examples": report.num_examples}
    return outputs, summary


def _run_mdl_layers(req: MdlLayersRequest):
    data, header, inputs = _load_mdl_data(req.activations_path,
                                          req.splits_path, req.split)
    _ensure_outdir(req.out_dir)
    write_manifest(build_manifest("mdl-layers", inputs, req.model_dump()),
                   req.out_dir)
    config = resolve_probe_config(req.config, header)
    curve = layerwise_compression(data, config, req.seed,
                                  fractions=req.fractions, layers=req.layers)
    run_id = req.run_id or os.path.splitext(
        os.path.basename(req.activations_path))[0]
    outputs = emit_layer_curves({run_id: curve}, req.out_dir)
    summary = {"best_layer": curve.best_layer,
               "compressions": curve.compressions}
    return outputs, summary


def _run_transfer(req: TransferRequest):
    if not req.sets:
        raise errors.ConfigurationError("transfer request has no sets")
    inputs = {}
    datasets = {}
    header0 = None
    for entry in req.sets:
        _require_file(entry.activations_path)
        _require_file(entry.splits_path)
        key = DistributionKey(entry.dataset, entry.lang, entry.encoder,
                              entry.weights_mode)
        tag = f"{key.label()}:{key.weights_mode}"
        inputs[f"{tag}:activations"] = entry.activations_path
        inputs[f"{tag}:splits"] = entry.splits_path
        with read_activation_set(entry.activations_path) as reader:
            if header0 is None:
                header0 = reader.header
            elif reader.header.num_classes != header0.num_classes:
                raise errors.ConfigurationError(
                    f"{entry.activations_path}: num_classes "
                    f"{reader.header.num_classes} != {header0.num_classes}")
            idx = _split_indices(reader, entry.splits_path, ("train", "test"))
            train = ProbeDataset.from_activation_set(reader, idx["train"])
            test = ProbeDataset.from_activation_set(reader, idx["test"])
        if req.train_size is not None:
            keep = stratified_subsample_indices(
                train.labels, req.train_size,
                derive_seed(req.subsample_seed, "subsample", tag))
            train = train.subset(keep)
        datasets[key] = (train, test)
    _ensure_outdir(req.out_dir)
    write_manifest(build_manifest("transfer", inputs, req.model_dump()),
                   req.out_dir)
    config = resolve_probe_config(req.config, header0)
    matrix = run_transfer_matrix(datasets, config, seeds=req.seeds,
                                 max_workers=req.max_workers)
    train_size = len(next(iter(datasets.values()))[0])
    test_sizes = {key.identity: len(pair[1]) for key, pair in datasets.items()}
    outputs = emit_transfer_report(matrix, req.out_dir, "transfer",
                                   train_size, test_sizes)
    summary = {
        "cells": {
            f"{'/'.join(src)}->{'/'.join(tgt)}:{mode}": res.mean_accuracy
            for (src, tgt, mode), res in sorted(matrix.cells.items())
        },
        "train_size": train_size,
    }
    return outputs, summary


def _run_report(req: ReportRequest):
    if not req.curve_csvs:
        raise errors.ConfigurationError("report request lists no inputs")
    rows = []
    for path in req.curve_csvs:
        _require_file(path)
        rows.extend(read_layer_curves_csv(path))
    _ensure_outdir(req.out_dir)
    inputs = {f"curves{i}": p for i, p in enumerate(req.curve_csvs)}
    write_manifest(build_manifest("report", inputs, req.model_dump()),
                   req.out_dir)
    rows.sort(key=lambda r: (r["run_id"], int(r["layer"])))
    series = {}
    for row in rows:
        series.setdefault(row["run_id"], []).append(float(row["compression"]))
    csv_path = os.path.join(req.out_dir, f"{req.stem}.csv")
    write_csv_report(csv_path, LAYERS_COLUMNS, rows)
    svg_path = os.path.join(req.out_dir, f"{req.stem}.svg")
    with open(svg_path, "w", encoding="utf-8", newline="") as f:
        f.write(layer_curves_svg(sorted(series.items())))
    return [csv_path, svg_path], {"runs": sorted(series)}


def _stratified_id_splits(labels, ratios, seed):
    """Per-class shuffle + largest-remainder slices over record ids."""
    labels = np.asarray(labels)
    parts = {"train": [], "dev": [], "test": []}
    for c in np.unique(labels):
        ids = np.flatnonzero(labels == c)
        order = rng_for(seed, "split", str(int(c))).permutation(len(ids))
        ids = ids[order]
        n_train, n_dev, _ = _split_counts(len(ids), ratios)
        parts["train"].extend(int(i) for i in ids[:n_train])
        parts["dev"].extend(int(i) for i in ids[n_train:n_train + n_dev])
        parts["test"].extend(int(i) for i in ids[n_train + n_dev:])
    return {name: sorted(ids) for name, ids in parts.items()}


def _run_synth(req: SynthRequest):
    _ensure_outdir(req.out_dir)
    write_manifest(build_manifest("synth", {}, req.model_dump()), req.out_dir)
    spec = SynthSpec(num_examples=req.num_examples,
                     num_layers=req.num_layers, hidden_dim=req.hidden_dim,
                     num_classes=req.num_classes, seed=req.seed,
                     signal_layer=req.signal_layer,
                     signal_strength=req.signal_strength,
                     max_span_len=req.max_span_len)
    aset = synth_activations(spec)
    aset.header.metadata["weights_mode"] = req.weights_mode
    apf_path = os.path.join(req.out_dir, "synth.apf")
    write_activation_set(aset.header, list(aset), apf_path)
    outputs = [apf_path]
    summary = {"num_examples": req.num_examples, "path": apf_path}
    if req.ratios is not None:
        doc = _stratified_id_splits(aset.labels(), req.ratios, req.seed)
        doc["seed"] = req.seed
        doc["ratios"] = list(req.ratios)
        doc["label_map"] = {str(c): int(c) for c in range(req.num_classes)}
        splits_path = os.path.join(req.out_dir, "splits.json")
        with open(splits_path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
        outputs.append(splits_path)
        summary["splits"] = {k: len(doc[k]) for k in ("train", "dev", "test")}
    return outputs, summary


_EXECUTORS = {
    "prep": _run_prep,
    "edge": _run_edge,
    "mdl": _run_mdl,
    "mdl-layers": _run_mdl_layers,
    "transfer": _run_transfer,
    "report": _run_report,
    "synth": _run_synth,
}


def execute(request):
    """Run one validated job request synchronously."""
    return _EXECUTORS[request.kind](request)


# ---------------------------------------------------------------------------
# Selftest: gradient check plus small-instance MDL oracle equivalence


def gradient_selftest(draws: int = 20, step: float = 1e-4) -> float:
    """Max relative gradient error over random (params, batch) draws.

    Draws whose ReLU pre-activations sit within the finite-difference
    step of the kink are skipped; the check is about gradient algebra,
    not about sampling the non-differentiable point.
    """
    config = ProbeConfig(num_classes=3, projection_dim=6, mlp_hidden_dim=8,
                         layer_mode="mix")
    worst = 0.0
    done = 0
    for attempt in itertools.count():
        rng = rng_for(1234, "selftest", attempt)
        params = init_params(3, 10, config, seed=attempt)
        for _, array in params.arrays():
            array += 0.5 * rng.standard_normal(array.shape)
        means = rng.standard_normal((4, 3, 10))
        labels = rng.integers(0, 3, size=4)
        _, cache = _forward_batch(params, means, config, keep_cache=True)
        if np.min(np.abs(cache["pre_hidden"])) < 10 * step:
            continue
        worst = max(worst, check_gradients(params, means, labels, config,
                                           step=step))
        done += 1
        if done >= draws:
            return worst


def mdl_oracle_selftest() -> bool:
    spec = SynthSpec(num_examples=16, num_layers=2, hidden_dim=8,
                     num_classes=2, seed=3)
    data = ProbeDataset.from_activation_set(synth_activations(spec))
    config = ProbeConfig(num_classes=2, projection_dim=8, mlp_hidden_dim=8)
    schedule = make_schedule(16, (0.125, 0.25, 0.5, 1.0))
    report = online_coding(data, config, schedule, seed=5)
    naive = naive_online_coding_total(data, config, schedule.boundaries,
                                      seed=5)
    return report.total_mdl_bits == naive


def run_selftest() -> SelftestResponse:
    max_err = gradient_selftest()
    bit_exact = mdl_oracle_selftest()
    return SelftestResponse(max_gradient_rel_error=max_err,
                            gradient_draws=20,
                            mdl_oracle_bit_exact=bit_exact,
                            passed=(max_err < 1e-4) and bit_exact)


# ---------------------------------------------------------------------------
# Async job store for the HTTP API


class JobStore:
    def __init__(self, max_workers: int = 2):
        self._pool = ThreadPoolExecutor(max_workers=max_workers)
        self._jobs = {}
        self._lock = threading.Lock()
        self._counter = 0

    def submit(self, request) -> JobInfo:
        with self._lock:
            self._counter += 1
            job_id = f"{self._counter:04d}-{request.kind}"
            info = JobInfo(job_id=job_id, kind=request.kind, status="queued")
            self._jobs[job_id] = info
        self._pool.submit(self._run, job_id, request)
        return info.model_copy()

    def _run(self, job_id: str, request):
        with self._lock:
            self._jobs[job_id].status = "running"
        try:
            outputs, summary = execute(request)
        except BaseException as e:
            with self._lock:
                info = self._jobs[job_id]
                info.status = "failed"
                info.error = str(e)
                info.error_kind = classify_error(e)
            return
        with self._lock:
            info = self._jobs[job_id]
            info.status = "succeeded"
            info.outputs = [str(p) for p in outputs]
            info.summary = summary

    def get(self, job_id: str):
        with self._lock:
            info = self._jobs.get(job_id)
            return info.model_copy() if info else None

    def shutdown(self):
        self._pool.shutdown(wait=True)
