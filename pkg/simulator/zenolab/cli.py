"""
Command-line entry point.

    python -m zenolab run <config.json> [--out DIR]
    python -m zenolab validate <config.json>
    python -m zenolab --version

Exit status: 0 success, 2 invalid or unreadable config, 3 numeric failure
while running (cap exceeded, rejected input, broken invariant).
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .config import configure_logging, get_settings
from .errors import BranchCapError, NumericFailure, RejectedInputError
from .experiments import execute
from .records import write_outputs
from .schemas import Diagnostic, validate_config

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3


class ConfigReadError(Exception):
    """The config file could not be read or is not JSON."""


def read_config(path: Path) -> Any:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigReadError(f"{path}: cannot read config ({e.strerror or e})") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigReadError(f"{path}: not valid JSON (line {e.lineno}, column {e.colno}: {e.msg})") from e


def _report(diagnostics: list[Diagnostic]) -> None:
    for d in diagnostics:
        print(f"invalid config: {d}", file=sys.stderr)


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        data = read_config(Path(args.config))
    except ConfigReadError as e:
        print(str(e), file=sys.stderr)
        return EXIT_INVALID
    _, diagnostics = validate_config(data)
    if diagnostics:
        _report(diagnostics)
        return EXIT_INVALID
    print(f"{args.config}: ok")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    try:
        data = read_config(Path(args.config))
    except ConfigReadError as e:
        print(str(e), file=sys.stderr)
        return EXIT_INVALID
    cfg, diagnostics = validate_config(data)
    if cfg is None:
        _report(diagnostics)
        return EXIT_INVALID

    out_dir = Path(args.out or cfg.output.dir or get_settings().output_dir)
    try:
        summary, records = execute(cfg)
    except BranchCapError as e:
        print(f"cap exceeded: {e} (raise ZENOLAB_BRANCH_CAP or shrink the grid)", file=sys.stderr)
        return EXIT_NUMERIC
    except (NumericFailure, RejectedInputError) as e:
        print(f"run failed: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    records_path, summary_path = write_outputs(summary, records, out_dir)
    print(f"{cfg.experiment}: {len(records)} records -> {records_path}")
    print(f"summary -> {summary_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zenolab", description="Direct-integral histories and Zeno-limit experiments")
    ap.add_argument("--version", action="version", version=f"zenolab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config", help="path to a JSON experiment config")
    run.add_argument("--out", default=None, help="output directory (overrides the config and ZENOLAB_OUTPUT_DIR)")
    run.set_defaults(handler=cmd_run)

    validate = sub.add_parser("validate", help="check a config file without running it")
    validate.add_argument("config", help="path to a JSON experiment config")
    validate.set_defaults(handler=cmd_validate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
