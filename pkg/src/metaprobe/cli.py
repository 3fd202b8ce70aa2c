"""Command-line surface.

Thin client over the job layer: every subcommand builds the same
request model the HTTP API accepts, then either executes it in-process
(default) or submits it to a running server via --server and polls.
Errors come out as one machine-parsable JSON line on stderr with a
distinct exit code per failure class.
"""

import argparse
import json
import os
import sys
import time

from .service import runner
from .service.schemas import (EdgeRequest, MdlLayersRequest, MdlRequest,
                              PrepRequest, ProbeConfigModel, ReportRequest,
                              SynthRequest, TransferRequest,
                              TransferSetModel)

EXIT_CODES = {
    "ok": 0,
    "internal": 1,
    "usage": 2,
    "io": 3,
    "format": 4,
    "manifest": 5,
    "config": 6,
    "run": 7,
}

POLL_INTERVAL_SEC = 0.2


class RemoteJobError(Exception):
    def __init__(self, message: str, kind: str):
        super().__init__(message)
        self.kind = kind


def _fail(kind: str, message: str) -> int:
    line = json.dumps({"error": message, "kind": kind}, sort_keys=True)
    sys.stderr.write(line + "\n")
    return EXIT_CODES.get(kind, EXIT_CODES["internal"])


def _layer_mode(text: str):
    if text == "mix":
        return "mix"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"layer must be 'mix' or an integer, got {text!r}")


def _probe_config(args) -> ProbeConfigModel:
    return ProbeConfigModel(layer_mode=getattr(args, "layer", "mix"))


def _drop_none(**kwargs) -> dict:
    return {k: v for k, v in kwargs.items() if v is not None}


# ---------------------------------------------------------------------------
# Request builders, one per subcommand


def _req_prep(args):
    return PrepRequest(examples_path=args.in_path, out_dir=args.out,
                       **_drop_none(ratios=args.ratios, seed=args.seed,
                                    train_size=args.train_size))


def _req_edge(args):
    return EdgeRequest(activations_path=args.in_path, splits_path=args.splits,
                       out_dir=args.out, config=_probe_config(args),
                       **_drop_none(seeds=args.seeds,
                                    train_size=args.train_size,
                                    subsample_seed=args.subsample_seed,
                                    weights_mode=args.weights_mode))


def _req_mdl(args):
    return MdlRequest(activations_path=args.in_path, out_dir=args.out,
                      config=_probe_config(args),
                      **_drop_none(splits_path=args.splits, split=args.split,
                                   seed=args.seed, fractions=args.fractions))


def _req_mdl_layers(args):
    return MdlLayersRequest(activations_path=args.in_path, out_dir=args.out,
                            **_drop_none(splits_path=args.splits,
                                         split=args.split, seed=args.seed,
                                         fractions=args.fractions,
                                         layers=args.layers,
                                         run_id=args.run_id))


def _req_transfer(args):
    with open(args.in_path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    entries = doc["sets"] if isinstance(doc, dict) else doc
    sets = [TransferSetModel(**entry) for entry in entries]
    return TransferRequest(sets=sets, out_dir=args.out,
                           **_drop_none(seeds=args.seeds,
                                        train_size=args.train_size,
                                        subsample_seed=args.subsample_seed,
                                        max_workers=args.max_workers))


def _req_report(args):
    return ReportRequest(curve_csvs=args.in_path, out_dir=args.out,
                         **_drop_none(stem=args.stem))


def _req_synth(args):
    kwargs = _drop_none(num_examples=args.n, num_layers=args.num_layers,
                        hidden_dim=args.hidden_dim, num_classes=args.classes,
                        seed=args.seed, signal_layer=args.signal_layer,
                        signal_strength=args.signal_strength,
                        max_span_len=args.max_span,
                        weights_mode=args.weights_mode)
    if args.no_splits:
        kwargs["ratios"] = None
    elif args.ratios is not None:
        kwargs["ratios"] = tuple(args.ratios)
    return SynthRequest(out_dir=args.out, **kwargs)


# ---------------------------------------------------------------------------
# Execution paths


def _remote_execute(server: str, request, out_dir):
    import httpx
    with httpx.Client(base_url=server, timeout=60.0) as client:
        resp = client.post("/v1/jobs", json={"request": request.model_dump()})
        resp.raise_for_status()
        info = resp.json()
        while info["status"] in ("queued", "running"):
            time.sleep(POLL_INTERVAL_SEC)
            resp = client.get(f"/v1/jobs/{info['job_id']}")
            resp.raise_for_status()
            info = resp.json()
        if info["status"] == "failed":
            raise RemoteJobError(info.get("error") or "job failed",
                                 info.get("error_kind") or "internal")
        outputs = []
        for path in info["outputs"]:
            name = os.path.basename(path)
            local = os.path.join(out_dir, name) if out_dir else path
            if not os.path.exists(local):
                os.makedirs(os.path.dirname(local) or ".", exist_ok=True)
                resp = client.get(
                    f"/v1/jobs/{info['job_id']}/files/{name}")
                resp.raise_for_status()
                with open(local, "wb") as f:
                    f.write(resp.content)
            outputs.append(local)
        return outputs, info["summary"]


def _dispatch(args, build) -> int:
    request = build(args)
    if args.server:
        outputs, summary = _remote_execute(args.server, request,
                                           getattr(args, "out", None))
    else:
        outputs, summary = runner.execute(request)
    for path in outputs:
        print(f"wrote {path}")
    print("summary " + json.dumps(summary, sort_keys=True))
    return EXIT_CODES["ok"]


def _cmd_selftest(args) -> int:
    if args.server:
        import httpx
        resp = httpx.post(f"{args.server}/v1/selftest", timeout=300.0)
        resp.raise_for_status()
        result = resp.json()
    else:
        result = runner.run_selftest().model_dump()
    print(f"max gradient relative error: "
          f"{result['max_gradient_rel_error']:.3e} "
          f"over {result['gradient_draws']} draws")
    print(f"mdl online-coding oracle bit-exact: "
          f"{result['mdl_oracle_bit_exact']}")
    if not result["passed"]:
        return _fail("run", "selftest failed")
    print("selftest passed")
    return EXIT_CODES["ok"]


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(max_workers=args.workers), host=args.host,
                port=args.port, log_level="info")
    return EXIT_CODES["ok"]


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", default=None,
                        help="base URL of a running server; default runs "
                             "in-process")

    parser = argparse.ArgumentParser(
        prog="metaprobe",
        description="Span-probe training, MDL layer analysis, and transfer "
                    "matrices over frozen-encoder activations.")
    sub = parser.add_subparsers(dest="command")

    def add(name, build, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=lambda a, b=build: _dispatch(a, b))
        return p

    p = add("prep", _req_prep, "balance and split a canonical example file")
    p.add_argument("--in", dest="in_path", required=True,
                   metavar="EXAMPLES.jsonl")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--ratios", nargs=3, type=float, default=None,
                   metavar=("TRAIN", "DEV", "TEST"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--train-size", type=int, default=None)

    p = add("edge", _req_edge, "train probes on one split and report "
                               "test accuracy per seed")
    p.add_argument("--in", dest="in_path", required=True, metavar="SET.apf")
    p.add_argument("--splits", required=True, metavar="SPLITS.json")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seeds", nargs="+", type=int, default=None)
    p.add_argument("--train-size", type=int, default=None)
    p.add_argument("--subsample-seed", type=int, default=None)
    p.add_argument("--weights-mode", choices=("pretrained", "randomized"),
                   default=None)
    p.add_argument("--layer", type=_layer_mode, default="mix",
                   help="'mix' for the learned scalar mix, or one layer index")

    p = add("mdl", _req_mdl, "online-coding MDL over one split")
    p.add_argument("--in", dest="in_path", required=True, metavar="SET.apf")
    p.add_argument("--splits", default=None, metavar="SPLITS.json")
    p.add_argument("--split", choices=("train", "dev", "test"), default=None)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fractions", nargs="+", type=float, default=None)
    p.add_argument("--layer", type=_layer_mode, default="mix")

    p = add("mdl-layers", _req_mdl_layers,
            "per-layer MDL compression curve (single-layer probes)")
    p.add_argument("--in", dest="in_path", required=True, metavar="SET.apf")
    p.add_argument("--splits", default=None, metavar="SPLITS.json")
    p.add_argument("--split", choices=("train", "dev", "test"), default=None)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fractions", nargs="+", type=float, default=None)
    p.add_argument("--layers", nargs="+", type=int, default=None,
                   help="layer subset; default probes every layer")
    p.add_argument("--run-id", default=None)

    p = add("transfer", _req_transfer,
            "train-on-source / test-on-target accuracy matrix")
    p.add_argument("--in", dest="in_path", required=True,
                   metavar="SETS.json",
                   help="JSON document listing the distributions: "
                        '{"sets": [{dataset, lang, encoder, weights_mode, '
                        "activations_path, splits_path}, ...]}")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seeds", nargs="+", type=int, default=None)
    p.add_argument("--train-size", type=int, default=None)
    p.add_argument("--subsample-seed", type=int, default=None)
    p.add_argument("--max-workers", type=int, default=None)

    p = add("report", _req_report,
            "merge layer-curve CSVs into one table and plot")
    p.add_argument("--in", dest="in_path", nargs="+", required=True,
                   metavar="CURVES.csv")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--stem", default=None)

    p = add("synth", _req_synth,
            "generate a synthetic activation set with an optional "
            "planted signal layer")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--num-layers", type=int, default=None)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--signal-layer", type=int, default=None)
    p.add_argument("--signal-strength", type=float, default=None)
    p.add_argument("--max-span", type=int, default=None)
    p.add_argument("--ratios", nargs=3, type=float, default=None,
                   metavar=("TRAIN", "DEV", "TEST"))
    p.add_argument("--no-splits", action="store_true")
    p.add_argument("--weights-mode", choices=("pretrained", "randomized"),
                   default=None)

    p = sub.add_parser("selftest", parents=[common],
                       help="gradient check plus MDL oracle equivalence")
    p.set_defaults(func=_cmd_selftest)

    p = sub.add_parser("serve", help="run the HTTP job server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--workers", type=int, default=2,
                   help="size of the job worker pool")
    p.set_defaults(func=_cmd_serve)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 on --help
        return int(e.code) if e.code else EXIT_CODES["ok"]
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_CODES["usage"]
    try:
        return args.func(args)
    except RemoteJobError as e:
        return _fail(e.kind, str(e))
    except Exception as e:
        return _fail(runner.classify_error(e), f"{type(e).__name__}: {e}")


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
