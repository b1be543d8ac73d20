"""Command line entry point: ``biasaudit <stage> [options]``.

Exit codes: 0 success, 1 other error, 2 input error, 3 missing credential,
4 missing intermediate.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, RunConfig, load_config
from .pipeline import StageError, StageResult

log = logging.getLogger("biasaudit")


def _models(value: str) -> list[str]:
    names = [v.strip() for v in value.split(",") if v.strip()]
    if not names:
        raise argparse.ArgumentTypeError("--models needs at least one name")
    return names


def _add_common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default,
                        help="YAML run config (default: bundled offline demo)")
    parser.add_argument("--out", type=Path, default=default, help="output directory")
    parser.add_argument("--models", type=_models, default=default, metavar="NAME,...",
                        help="only run these providers")
    parser.add_argument("--alpha", type=float, default=default, help="significance level")
    parser.add_argument("--equal-var", action="store_true", default=default,
                        help="pooled-variance Student t-test instead of Welch")
    parser.add_argument("--threshold", type=float, default=default, help="name-gender ratio threshold")
    parser.add_argument("--max-in-flight", type=int, default=default, help="concurrent requests per provider")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biasaudit",
        description="Rewrite abstracts with LLMs, extract lexicon features, and test for alignment and gender gaps.",
    )
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gender": "label each publication Female/Male/MixedGender/Unknown",
        "rewrite": "regenerate abstracts through each provider",
        "extract": "compute feature tables for human and rewritten abstracts",
        "compare": "correlations (human vs model) and gender t-tests",
        "report": "tables, heatmaps, bar chart and manifest",
        "pipeline": "run all stages, skipping those that are up to date",
    }
    for name, text in helps.items():
        _add_common(sub.add_parser(name, help=text, description=text), suppress=True)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(
        args.config,
        out_dir=args.out,
        models=args.models,
        alpha=args.alpha,
        equal_var=True if args.equal_var else None,
        threshold=args.threshold,
        max_in_flight=args.max_in_flight,
    )
    return cfg.validate()


def _print_stage(res: StageResult) -> None:
    state = "skipped (up to date)" if res.skipped else "done"
    print(f"[{res.name}] {state}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        if args.command == "pipeline":
            pipeline.run_pipeline(cfg, on_stage=_print_stage)
            print(f"report written to {pipeline.Layout(cfg.out_dir).report('')}")
            return 0
        res = pipeline.STAGE_FUNCS[args.command](cfg)
        _print_stage(res)
        if args.command == "gender":
            for label, count in res.summary.items():
                print(f"  {label}: {count}")
        elif args.command in ("rewrite", "compare"):
            print(json.dumps(res.summary, indent=1, sort_keys=True))
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - exit code 1 is the catch-all
        log.debug("unhandled error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
