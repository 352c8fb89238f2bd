"""Command-line entry point: ``valleyscope <command> --config cfg.json --out DIR``."""
from __future__ import annotations

import argparse
import logging
import sys

import jsonschema

from . import __version__, pipeline
from .config import ExperimentConfig


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "backend", None):
        cfg.backend = args.backend
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="valleyscope", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(name, models="many", help=None):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="experiment config JSON (defaults if omitted)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--backend", help="mcmc | local-sa | remote[:URL] | gibbs-as-annealer")
        if models == "many":
            p.add_argument("--model", action="append", required=True, help="model JSON (repeatable)")
        elif models == "one":
            p.add_argument("--model", required=True, help="model JSON")
        return p

    common("train", models=None, help="train an RBM with CD-k or exact gradients")
    p = common("classify", help="classify test digits with the pixels clamped")
    p.add_argument("--backends", nargs="+", help="evaluate several backends (default: mcmc and --backend)")
    p = common("reconstruct", help="fill in masked pixels")
    p.add_argument("--backends", nargs="+")
    p.add_argument("--mask", type=int, nargs="+", help="visible indices to hide")
    p = common("generate", models="one", help="lowest-energy images per clamped class")
    p.add_argument("--classes", type=int, nargs="+")
    p.add_argument("-k", type=int)
    common("compare", help="valley registries of MCMC and annealer samples")
    p = common("sweep-scale", models="one", help="task errors over embedding scales")
    p.add_argument("--scales", type=float, nargs="+")
    p = sub.add_parser("plot", help="render SVG figures for the CSV reports in a run directory")
    p.add_argument("--out", required=True, help="run directory")
    p = sub.add_parser("serve-mock", help="run the mock annealing service")
    p.add_argument("--bind", default="127.0.0.1:8765")
    p.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cmd = args.command
    try:
        if cmd == "plot":
            from .plotting import plot_run

            for path in plot_run(args.out):
                print(path)
            return 0
        if cmd == "serve-mock":
            from .annealer import mock_service

            svc = mock_service(args.bind, args.seed)
            print(f"serving on {svc.url}", flush=True)
            try:
                svc.thread.join()
            except KeyboardInterrupt:
                pass
            finally:
                svc.close()
            return 0
        cfg = _config(args)
        if cmd == "train":
            pipeline.cmd_train(cfg, args.out)
        elif cmd == "classify":
            rep = pipeline.cmd_classify(cfg, args.model, args.out, args.backends)
            for r in rep["results"]:
                print(f"{r['model']} {r['backend']}: error {r['error']:.4f} ({r['n_invalid']} invalid)")
        elif cmd == "reconstruct":
            rep = pipeline.cmd_reconstruct(cfg, args.model, args.out, args.backends, args.mask)
            for r in rep["results"]:
                print(f"{r['model']} {r['backend']}: pixel error {r['pixel_error']:.4f}")
        elif cmd == "generate":
            pipeline.cmd_generate(cfg, args.model, args.out, classes=args.classes, k=args.k)
        elif cmd == "compare":
            rep = pipeline.cmd_compare(cfg, args.model, args.out)
            for m in rep["models"]:
                c = m["counts"]
                print(f"{m['model']}: {c['n_valleys_mcmc']} MCMC valleys, {c['n_valleys_annealer']} annealer "
                      f"valleys, {c['shared']} shared")
        elif cmd == "sweep-scale":
            rep = pipeline.cmd_sweep_scale(cfg, args.model, args.out, scales=args.scales)
            print(f"best scale {rep['argmin_scale']}")
    except jsonschema.ValidationError as exc:
        print(f"valleyscope {cmd}: invalid config: {exc.message}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"valleyscope {cmd}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
