"""Command-line front end: ``nodehmc <stage> --config run.ini``."""
import argparse
import json
import logging
import os
import sys

from . import __version__
from .config import load_config, settings_help
from .errors import HmcError
from .pipeline import INPUT_ERROR, PIPELINE_ERROR, STAGES, PipelineError, run_pipeline

LOG_ENV = "NODEHMC_LOG_LEVEL"

_HELP = {
    "normalize": "close annotations and reduce the class DAG to a tree",
    "split": "cut the tree into sub-hierarchies with their node subgraphs",
    "features": "topological features per sub-hierarchy",
    "embed": "random-walk embeddings per sub-hierarchy",
    "train": "cross-validated per-class classifiers",
    "predict": "true-path consistent decisions and extended annotations",
    "baseline": "HBN-style neighborhood baseline on the same folds",
    "eval": "metrics report, curve CSVs and timing report",
    "run": "every stage in order",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nodehmc",
        description="Hierarchical multi-label classification of network nodes.",
        epilog=f"Configuration keys and defaults:\n{settings_help()}\n\n"
               f"Exit codes: 0 success, {INPUT_ERROR} input error, {PIPELINE_ERROR} pipeline error.\n"
               f"Log verbosity: set {LOG_ENV} (DEBUG, INFO, WARNING, ...).",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in list(STAGES) + ["run"]:
        p = sub.add_parser(name, help=_HELP[name], description=_HELP[name])
        p.add_argument("--config", "-c", required=True, help="INI configuration file")
        p.add_argument("--seed", type=int, help="override [engine] seed")
        p.add_argument("--output", "-o", help="override [run] output")
        p.add_argument("--workers", type=int, help="override [run] workers")
        p.add_argument("--baseline", choices=("none", "hbn"), help="override [run] baseline")
        p.add_argument("--widen-candidates", action="store_true", default=None,
                       help="also score network nodes outside each sub-hierarchy")
    return parser


def _emit(err):
    sys.stderr.write(json.dumps(err.as_dict(), sort_keys=True) + "\n")
    return err.code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=os.environ.get(LOG_ENV, "WARNING").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    overrides = {}
    if args.output is not None:
        overrides["run.output"] = args.output
    if args.workers is not None:
        overrides["run.workers"] = str(args.workers)
    if args.baseline is not None:
        overrides["run.baseline"] = args.baseline
    if args.widen_candidates:
        overrides["run.widen_candidates"] = "true"
    try:
        cfg = load_config(args.config, seed=args.seed, overrides=overrides)
    except (OSError, HmcError) as exc:
        return _emit(PipelineError("config", str(exc), code=INPUT_ERROR))
    try:
        if args.command == "run":
            report = run_pipeline(cfg)
            for model, rep in report.items():
                s = rep["summary"]
                if s["classes"]:
                    print(f"{model}: {s['classes']} classes, mean F1 {s['mean_f1']:.4f}, "
                          f"mean AP {s['mean_average_precision']:.4f}, mean AUC {s['mean_roc_auc']:.4f}")
        else:
            STAGES[args.command](cfg, cfg.output)
    except PipelineError as exc:
        return _emit(exc)
    except HmcError as exc:
        return _emit(PipelineError(args.command, str(exc)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
