"""Command line entry point.

Subcommands run one stage or the whole pipeline against a JSON config;
`fixture` writes the bundled synthetic corpus for demos and end-to-end
testing.  Exit codes: 0 ok, 1 internal error, 2 missing prerequisite,
3 validation failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .corpus import IngestError
from .pipeline import STAGES, MissingPrerequisiteError, PipelineRunner, StageValidationError

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_MISSING_PREREQUISITE = 2
EXIT_VALIDATION = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scigeo",
        description="Offline analytics pipeline over paper, institute and company dumps.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    for stage in STAGES + ("all",):
        p = sub.add_parser(stage, help=f"run the {stage} stage" if stage != "all" else "run every stage in order")
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument(
            "--stage-force",
            action="store_true",
            help="recompute even when artifacts are up to date",
        )

    fx = sub.add_parser("fixture", help="write the bundled synthetic corpus")
    fx.add_argument("--out", required=True, help="directory for the fixture files")
    fx.add_argument("--seed", type=int, default=20240, help="generator seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "fixture":
        from .fixtures import write_fixture

        paths = write_fixture(Path(args.out), seed=args.seed)
        print(f"fixture written to {paths.root}")
        return EXIT_OK
    try:
        config = load_config(args.config, output_dir=args.out, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    runner = PipelineRunner(config)
    lock = Path(config.output_dir) / ".lock"
    lock.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd = lock.open("x")
    except FileExistsError:
        print(
            f"output directory is locked by another run ({lock}); remove the lock if stale",
            file=sys.stderr,
        )
        return EXIT_INTERNAL
    try:
        fd.close()
        stages = list(STAGES) if args.command == "all" else [args.command]
        for stage in stages:
            outcome = runner.run_stage(stage, force=args.stage_force)
            print(f"{stage}: {outcome}")
        return EXIT_OK
    except MissingPrerequisiteError as exc:
        print(f"missing prerequisite: {exc.artifact_name}", file=sys.stderr)
        return EXIT_MISSING_PREREQUISITE
    except (StageValidationError, IngestError, ConfigError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - map anything else to exit 1
        logging.getLogger(__name__).exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    finally:
        lock.unlink(missing_ok=True)


if __name__ == "__main__":
    sys.exit(main())
