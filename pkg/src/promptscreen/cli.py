"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 backend failure,
4 generalization-delta breach (with --fail-on-delta), 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ._version import __version__
from .catalog import generate_catalog, load_catalog, validate_catalog, write_catalog
from .errors import BackendDown, ConfigError, PromptScreenError
from .pipeline import PipelineConfig, RunPaths, run_pipeline, run_stage


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptscreen",
        description="Design, evaluate, select, and validate prompt strategies "
                    "for binary transcript classification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p, with_delta=False):
        p.add_argument("--config", required=True, help="pipeline config JSON file")
        p.add_argument("--out", help="override output directory")
        p.add_argument("--seed", type=int, help="override master seed")
        p.add_argument("--backend", choices=["mock", "http"], help="override backend kind")
        if with_delta:
            p.add_argument(
                "--fail-on-delta", type=float, metavar="X",
                help="exit 4 if |delta F1| between splits exceeds X",
            )

    add_config_args(sub.add_parser("run", help="run the full pipeline"), with_delta=True)
    add_config_args(sub.add_parser("sample", help="stage 1: build the in/out-of-sample split"))

    cat = sub.add_parser("catalog", help="prompt catalog tools (or stage 2 with --config)")
    cat.add_argument("action", nargs="?", choices=["list", "export", "validate"],
                     help="list variants, export catalog.json, or validate a catalog file")
    cat.add_argument("target", nargs="?", help="catalog file for the validate action")
    cat.add_argument("--config", help="pipeline config (stage mode)")
    cat.add_argument("--out", help="output file (export) or directory override (stage mode)")
    cat.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    cat.add_argument("--backend", choices=["mock", "http"], help=argparse.SUPPRESS)

    infer = sub.add_parser("infer", help="stage 3: run inference on a split")
    infer.add_argument("--split", choices=["is", "oos"], default="is")
    add_config_args(infer)

    add_config_args(sub.add_parser("evaluate", help="stage 4: compute metrics"))
    add_config_args(sub.add_parser("select", help="stage 5: rank prompts and recommend"))
    add_config_args(sub.add_parser("validate",
                                   help="stage 6: out-of-sample validation"), with_delta=True)
    add_config_args(sub.add_parser("report", help="stage 7: emit the report bundle"))
    return parser


def _load_config(args) -> PipelineConfig:
    overrides = {
        "output_dir": getattr(args, "out", None),
        "seed": getattr(args, "seed", None),
        "backend_kind": getattr(args, "backend", None),
    }
    return PipelineConfig.from_file(args.config, overrides=overrides)


def _check_delta(config: PipelineConfig, threshold: float | None) -> int:
    if threshold is None:
        return 0
    paths = RunPaths(config.output_dir)
    report = json.loads(paths.generalization.read_text(encoding="utf-8"))
    if report["abs_delta_f1"] > threshold:
        print(
            f"validation threshold breach: |delta F1| = {report['abs_delta_f1']:.4f} "
            f"> {threshold}", file=sys.stderr,
        )
        return 4
    return 0


def _cmd_run(args) -> int:
    config = _load_config(args)
    manifest = run_pipeline(config)
    for stage, state in manifest.stage_status.items():
        print(f"{stage:<14} {state}")
    print(f"config_hash {manifest.config_hash}")
    print(f"output      {config.output_dir}")
    if manifest.stage_error is not None:
        err = manifest.stage_error
        print(f"{err['stage']} failed: {err['error']}: {err['message']}", file=sys.stderr)
        return 3 if err["error"] == "BackendDown" else 1
    return _check_delta(config, getattr(args, "fail_on_delta", None))


_STAGE_COMMANDS = {
    "sample": "sample",
    "evaluate": "metrics",
    "select": "selection",
    "validate": "validation",
    "report": "reports",
}


def _cmd_stage(args, stage: str) -> int:
    config = _load_config(args)
    run_stage(config, stage)
    paths = RunPaths(config.output_dir)
    for path in paths.stage_outputs(stage):
        print(path)
    if stage == "validation":
        return _check_delta(config, getattr(args, "fail_on_delta", None))
    return 0


def _cmd_catalog(args) -> int:
    if args.action == "list":
        catalog = generate_catalog()
        for variant in catalog.variants:
            print(f"{variant.id:<7} {variant.family.value:<4} {variant.style_notes}")
        print(f"{len(catalog)} variants, hash {catalog.catalog_hash[:16]}")
        return 0
    if args.action == "export":
        if not args.out:
            raise ConfigError("catalog export requires --out FILE")
        write_catalog(generate_catalog(), args.out)
        print(args.out)
        return 0
    if args.action == "validate":
        if not args.target:
            raise ConfigError("catalog validate requires a catalog file argument")
        catalog = load_catalog(args.target)
        violations = validate_catalog(catalog)
        if violations:
            for violation in violations:
                print(violation)
            return 1
        print(f"OK: {len(catalog)} variants, hash {catalog.catalog_hash[:16]}")
        return 0
    # stage mode
    if not args.config:
        raise ConfigError("catalog stage mode requires --config (or use list/export/validate)")
    return _cmd_stage(args, "catalog")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "catalog":
            return _cmd_catalog(args)
        if args.command == "infer":
            return _cmd_stage(args, "inference_is" if args.split == "is" else "validation")
        return _cmd_stage(args, _STAGE_COMMANDS[args.command])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BackendDown as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return 3
    except PromptScreenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
