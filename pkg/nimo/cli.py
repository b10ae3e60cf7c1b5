"""Command-line entry point: ``python application.py --setting reg_toy``."""

import argparse
import json
import logging
from pathlib import Path
from typing import Optional, Sequence

from nimo.config import Config
from nimo.errors import (
    ConfigError,
    Diverged,
    ExperimentError,
    InsufficientRows,
    MissingColumn,
    ParseError,
    UnknownSetting,
)
from nimo.experiment import ExperimentConfig, run


_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Fit NIMO and baselines on a synthetic setting or a CSV file")
    parser.add_argument("--config", type=Path, help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="base seed; repetition r uses seed + r")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument(
        "--method", action="append",
        help="method to run (repeatable): nimo, lasso, logistic, mlp, ridge",
    )
    parser.add_argument("--setting", help="synthetic setting, e.g. reg_toy or cls1")
    parser.add_argument("--csv", type=Path, help="CSV dataset with a header row")
    parser.add_argument("--target-col", help="target column of the CSV dataset")
    parser.add_argument("--task", choices=["regression", "logistic"], help="task of the CSV dataset")
    parser.add_argument("--repeats", type=int, help="number of seeded repetitions")
    parser.add_argument("--workers", type=int, help="parallel grid cells")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file values, overridden by command-line flags."""
    payload: dict[str, object] = {}
    if args.config is not None:
        payload = _file_payload(args.config)

    if args.setting is not None:
        payload["setting"] = args.setting
        payload.pop("csv", None)
        payload.pop("csv_path", None)
    if args.csv is not None:
        payload["csv"] = str(args.csv)
        payload.pop("setting", None)
    if args.target_col is not None:
        payload["target_column"] = args.target_col
    if args.task is not None:
        payload["task"] = args.task
    if args.method:
        payload["methods"] = list(args.method)
    if args.repeats is not None:
        payload["repeats"] = args.repeats
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.out is not None:
        payload["output_dir"] = str(args.out)
    if args.workers is not None:
        payload["workers"] = args.workers
    return ExperimentConfig.from_dict(payload)


def _file_payload(path: Path) -> dict[str, object]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path} is not valid JSON: {err}") from err


def _exit_code(exc: Exception) -> int:
    cause = exc.cause if isinstance(exc, ExperimentError) else exc
    if isinstance(cause, (ConfigError, UnknownSetting)):
        return EXIT_CONFIG
    if isinstance(cause, Diverged):
        return EXIT_DIVERGED
    if isinstance(cause, (OSError, ParseError, MissingColumn, InsufficientRows)):
        return EXIT_IO
    raise exc


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=Config.LOG_LEVEL,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        report = run(config)
    except Exception as exc:
        code = _exit_code(exc)
        _logger.error("%s", exc)
        return code

    for name, summary in report.methods.items():
        reference = "" if summary.reference is None else f" (published {summary.reference:g})"
        print(f"{name}: {summary.metric} {summary.mean:.4f} ± {summary.std:.4f}{reference}")
    print(f"Report written to {config.output_dir / 'report.json'}")
    return EXIT_OK
