"""Report emission (CSV tables, SVG layer curves) and run manifests.

CSV column sets are fixed and versioned so that diffs between two runs
differ only in value cells. SVG output is plain 1.1 markup with
deterministic number formatting: identical results give byte-identical
files. Every job directory gets a manifest recording the engine
version, the full parameterization, and content hashes of all inputs,
sufficient to re-run the job bit-identically.
"""

import csv
import hashlib
import json
import os
from typing import Dict, List, Sequence

from . import __version__
from .errors import FormatError, ManifestMismatchError, MetaprobeError
from .mdl import LayerCurve, MDLReport
from .transfer import EdgeProbeResult, TransferMatrix

SCHEMA_VERSION = 1

MDL_COLUMNS = ["schema_version", "run_id", "layer", "num_examples",
               "num_classes", "seed", "boundaries", "uniform_cost_bits",
               "block_codelengths_bits", "total_mdl_bits", "compression"]
LAYERS_COLUMNS = ["schema_version", "run_id", "layer", "compression",
                  "total_mdl_bits", "num_examples", "num_classes", "seed",
                  "is_best"]
EDGE_COLUMNS = ["schema_version", "run_id", "source", "target",
                "weights_mode", "seed", "accuracy", "mean_accuracy",
                "train_size", "test_size"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, columns: Sequence[str], rows: List[dict]) -> None:
    if not rows:
        raise MetaprobeError(f"refusing to write empty report {path}")
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns),
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def write_csv_report(path, columns: Sequence[str], rows: List[dict]) -> None:
    """Write pre-built rows under one of the fixed column sets."""
    _write_csv(path, columns, rows)


def read_layer_curves_csv(path) -> List[dict]:
    """Rows of a layer-curve CSV, validated against the fixed columns."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != LAYERS_COLUMNS:
            raise FormatError(
                f"{path}: columns {reader.fieldnames} are not a layer-curve "
                f"report (expected {LAYERS_COLUMNS})")
        return list(reader)


def mdl_report_row(report: MDLReport, run_id: str, layer) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "run_id": run_id,
        "layer": layer,
        "num_examples": report.num_examples,
        "num_classes": report.num_classes,
        "seed": report.seed,
        "boundaries": ";".join(str(b) for b in report.schedule.boundaries),
        "uniform_cost_bits": report.uniform_cost_bits,
        "block_codelengths_bits": ";".join(
            repr(b) for b in report.block_codelengths_bits),
        "total_mdl_bits": report.total_mdl_bits,
        "compression": report.compression,
    }


def emit_mdl_report(report: MDLReport, outdir, run_id: str,
                    layer="mix") -> list:
    path = os.path.join(outdir, "mdl_report.csv")
    _write_csv(path, MDL_COLUMNS, [mdl_report_row(report, run_id, layer)])
    return [path]


def emit_layer_curves(curves: Dict[str, LayerCurve], outdir,
                      stem: str = "mdl_layers") -> list:
    """One CSV row per (run, layer) plus the layer-curve SVG plot."""
    if not curves:
        raise MetaprobeError("no layer curves to report")
    rows = []
    series = []
    for run_id in sorted(curves):
        curve = curves[run_id]
        for layer, rep in enumerate(curve.reports):
            if rep is None:
                continue
            rows.append({
                "schema_version": SCHEMA_VERSION,
                "run_id": run_id,
                "layer": layer,
                "compression": curve.compressions[layer],
                "total_mdl_bits": rep.total_mdl_bits,
                "num_examples": rep.num_examples,
                "num_classes": rep.num_classes,
                "seed": rep.seed,
                "is_best": int(layer == curve.best_layer),
            })
        series.append((run_id, list(curve.compressions)))
    csv_path = os.path.join(outdir, f"{stem}.csv")
    _write_csv(csv_path, LAYERS_COLUMNS, rows)
    svg_path = os.path.join(outdir, f"{stem}.svg")
    with open(svg_path, "w", encoding="utf-8", newline="") as f:
        f.write(layer_curves_svg(series))
    return [csv_path, svg_path]


def emit_edge_report(result: EdgeProbeResult, outdir, run_id: str,
                     source: str, target: str, weights_mode: str,
                     train_size: int, test_size: int,
                     filename: str = "edge_report.csv") -> list:
    rows = _edge_rows(result, run_id, source, target, weights_mode,
                      train_size, test_size)
    path = os.path.join(outdir, filename)
    _write_csv(path, EDGE_COLUMNS, rows)
    return [path]


def _edge_rows(result: EdgeProbeResult, run_id, source, target,
               weights_mode, train_size, test_size) -> list:
    rows = []
    for seed in result.seeds:
        rows.append({
            "schema_version": SCHEMA_VERSION,
            "run_id": run_id,
            "source": source,
            "target": target,
            "weights_mode": weights_mode,
            "seed": seed,
            "accuracy": result.per_seed[seed],
            "mean_accuracy": result.mean_accuracy,
            "train_size": train_size,
            "test_size": test_size,
        })
    return rows


def emit_transfer_report(matrix: TransferMatrix, outdir, run_id: str,
                         train_size: int, test_sizes: dict) -> list:
    """One CSV row per (source, target, weights_mode, seed)."""
    if not matrix.cells:
        raise MetaprobeError("transfer matrix has no cells")
    rows = []
    for (src, tgt, mode) in sorted(matrix.cells):
        result = matrix.cells[(src, tgt, mode)]
        rows.extend(_edge_rows(result, run_id, "/".join(src), "/".join(tgt),
                               mode, train_size, test_sizes.get(tgt, "")))
    path = os.path.join(outdir, "transfer_matrix.csv")
    _write_csv(path, EDGE_COLUMNS, rows)
    return [path]


# ---------------------------------------------------------------------------
# SVG layer-curve plot

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _svg_num(x: float) -> str:
    return f"{x:.6g}"


def layer_curves_svg(series: Sequence, width: int = 640,
                     height: int = 420) -> str:
    """Polyline per run across layer indices; axes 'layer' and
    'compression'. Deterministic byte output for identical input."""
    series = [(label, values) for label, values in series if values]
    if not series:
        raise MetaprobeError("no series to plot")
    num_layers = max(len(values) for _, values in series)
    lo = min(min(v) for _, v in series)
    hi = max(max(v) for _, v in series)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    ml, mr, mt, mb = 64, 16, 16, 48
    plot_w, plot_h = width - ml - mr, height - mt - mb

    def sx(layer):
        if num_layers == 1:
            return ml + plot_w / 2
        return ml + plot_w * layer / (num_layers - 1)

    def sy(value):
        return mt + plot_h * (1 - (value - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{ml}" y1="{mt + plot_h}" x2="{ml + plot_w}" '
        f'y2="{mt + plot_h}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + plot_h}" '
        f'stroke="black"/>',
    ]
    x_stride = max(1, (num_layers + 15) // 16)
    for layer in range(0, num_layers, x_stride):
        x = sx(layer)
        parts.append(f'<line x1="{_svg_num(x)}" y1="{mt + plot_h}" '
                     f'x2="{_svg_num(x)}" y2="{mt + plot_h + 4}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{_svg_num(x)}" y="{mt + plot_h + 18}" '
                     f'font-size="11" text-anchor="middle">{layer}</text>')
    for i in range(6):
        value = lo + (hi - lo) * i / 5
        y = sy(value)
        parts.append(f'<line x1="{ml - 4}" y1="{_svg_num(y)}" x2="{ml}" '
                     f'y2="{_svg_num(y)}" stroke="black"/>')
        parts.append(f'<text x="{ml - 8}" y="{_svg_num(y + 4)}" '
                     f'font-size="11" text-anchor="end">'
                     f'{_svg_num(value)}</text>')
    parts.append(f'<text x="{ml + plot_w / 2:.6g}" y="{height - 10}" '
                 f'font-size="13" text-anchor="middle">layer</text>')
    parts.append(f'<text x="16" y="{mt + plot_h / 2:.6g}" font-size="13" '
                 f'text-anchor="middle" transform="rotate(-90 16 '
                 f'{mt + plot_h / 2:.6g})">compression</text>')
    for i, (label, values) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        points = " ".join(f"{_svg_num(sx(l))},{_svg_num(sy(v))}"
                          for l, v in enumerate(values))
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.5" points="{points}"/>')
        ly = mt + 16 + 16 * i
        parts.append(f'<line x1="{ml + plot_w - 150}" y1="{ly}" '
                     f'x2="{ml + plot_w - 126}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{ml + plot_w - 120}" y="{ly + 4}" '
                     f'font-size="11">{_escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))


# ---------------------------------------------------------------------------
# Run manifests

def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(kind: str, inputs: Dict[str, str], params: dict) -> dict:
    """Hashes are recorded before any compute happens."""
    return {
        "kind": kind,
        "engine_version": __version__,
        "inputs": {
            name: {"path": str(path), "sha256": file_sha256(path)}
            for name, path in inputs.items()
        },
        "params": params,
    }


def write_manifest(manifest: dict, outdir) -> str:
    """Write manifest.json; refuses to resume into a directory whose
    existing manifest disagrees on kind or input hashes."""
    path = os.path.join(outdir, "manifest.json")
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as f:
            existing = json.load(f)
        old = {name: spec.get("sha256")
               for name, spec in existing.get("inputs", {}).items()}
        new = {name: spec["sha256"] for name, spec in manifest["inputs"].items()}
        if existing.get("kind") != manifest["kind"] or old != new:
            raise ManifestMismatchError(
                f"{path}: existing manifest does not match current inputs")
    with open(path, "w", encoding="utf-8", newline="") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
