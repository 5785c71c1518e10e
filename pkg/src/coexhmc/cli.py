"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 numeric or
runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline, synth
from .errors import ComputeError, InputError
from .ingest import RunConfig, load_config

log = logging.getLogger("coexhmc")


def _inputs(p: argparse.ArgumentParser, edges: bool = True) -> None:
    if edges:
        p.add_argument("--edges", required=True, type=Path, help="gene_a, gene_b, weight TSV")
    p.add_argument("--annotations", required=True, type=Path, help="gene, term TSV")
    p.add_argument("--hierarchy", required=True, type=Path, help="child, parent TSV")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value run configuration")
    p.add_argument("--threads", type=int, default=1, help="worker cap for forest training")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coexhmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and check the input tables and configuration")
    _inputs(p)
    _common(p)

    p = sub.add_parser("synth", help="write a synthetic planted-partition dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--spec", type=Path, help="JSON file with generator fields; flags below override it")
    for name, typ in (
        ("n_genes", int), ("n_blocks", int), ("in_block_density", float), ("cross_block_edge_prob", float),
        ("hierarchy_shape", str), ("n_terms", int), ("n_hierarchies", int), ("signal", float),
        ("noise", float), ("seed", int),
    ):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("features", help="clustering sweeps and enrichment features for both graphs")
    _inputs(p)
    _common(p)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("predict", help="out-of-fold hierarchical predictions")
    p.add_argument("--features", required=True, type=Path, help="directory holding J_G.tsv and J_F.tsv")
    _inputs(p, edges=False)
    _common(p)
    p.add_argument("--method", default="all", choices=["lcn", "lcpn", "lcl", "global", "all"])
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("evaluate", help="PR-based metrics and curve exports")
    p.add_argument("--predictions", required=True, type=Path)
    _inputs(p, edges=False)
    _common(p)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("ablate", help="global strategy on G-only, F-only and both feature sets")
    p.add_argument("--features", required=True, type=Path)
    _inputs(p, edges=False)
    _common(p)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("run-all", help="features, predict, evaluate and ablate in one go")
    _inputs(p)
    _common(p)
    p.add_argument("--method", default="all", choices=["lcn", "lcpn", "lcl", "global", "all"])
    p.add_argument("--no-ablation", action="store_true")
    p.add_argument("--out", required=True, type=Path)
    return parser


def _config(args) -> RunConfig:
    return load_config(args.config) if getattr(args, "config", None) else RunConfig()


def _synth(args) -> None:
    fields = json.loads(args.spec.read_text(encoding="utf-8")) if args.spec else {}
    for name in synth.SynthSpec.__dataclass_fields__:
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    spec = synth.spec_from_json(json.dumps(fields))
    paths = synth.write(synth.generate(spec), args.out)
    for kind, path in paths.items():
        print(f"{kind}\t{path}")


def run(args) -> None:
    if args.command == "synth":
        _synth(args)
        return
    cfg = _config(args)
    if args.command == "validate":
        print(json.dumps(pipeline.cmd_validate(cfg, args.edges, args.annotations, args.hierarchy), indent=1))
    elif args.command == "features":
        pipeline.cmd_features(cfg, args.edges, args.annotations, args.hierarchy, args.out)
    elif args.command == "predict":
        pipeline.cmd_predict(cfg, args.features, args.annotations, args.hierarchy, args.out, args.method, args.threads)
    elif args.command == "evaluate":
        pipeline.cmd_evaluate(cfg, args.predictions, args.annotations, args.hierarchy, args.out)
    elif args.command == "ablate":
        pipeline.cmd_ablate(cfg, args.features, args.annotations, args.hierarchy, args.out, args.threads)
    elif args.command == "run-all":
        pipeline.cmd_run_all(
            cfg, args.edges, args.annotations, args.hierarchy, args.out,
            args.method, args.threads, not args.no_ablation,
        )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logging.captureWarnings(True)
    try:
        run(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ComputeError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
