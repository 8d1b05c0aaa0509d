"""Command-line front end.

Subcommands: pretrain, downstream, compare, gamma-sweep and serve. Exit
status is 0 on success, 2 for invalid input (bad config, missing file,
model/config mismatch) and 1 for any other failure.
"""

import argparse
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path

import uvicorn

from fedinit.domain.errors import InvalidInputError
from fedinit.domain.experiment.schema import ExperimentConfig, RunManifest
from fedinit.domain.experiment.usecases import (
    CompareUseCase,
    DownstreamUseCase,
    GammaSweepUseCase,
    PretrainUseCase,
)
from fedinit.infra.config import ConfigError, load_config
from fedinit.infra.filesystem_repository import FilesystemArtifactRepository

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, required=True, help="experiment TOML file")
    parser.add_argument("--out", type=Path, required=True, help="directory receiving the run")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument(
        "--threads", type=int, default=1, help="worker threads; results do not depend on it"
    )
    parser.add_argument("--verbose", action="store_true", help="log per-client details")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedinit", description=__doc__)
    subparsers = parser.add_subparsers(dest="command", required=True)

    pretrain = subparsers.add_parser("pretrain", help="pre-train one initialization")
    _add_run_arguments(pretrain)

    downstream = subparsers.add_parser("downstream", help="score a model on downstream tasks")
    _add_run_arguments(downstream)
    downstream.add_argument("--model", type=Path, required=True, help="model binary to score")

    compare = subparsers.add_parser("compare", help="compare the methods in pretrain.compare")
    _add_run_arguments(compare)

    sweep = subparsers.add_parser("gamma-sweep", help="sweep the balancer of the configured method")
    _add_run_arguments(sweep)
    sweep.add_argument(
        "--gammas", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75, 1.0], help="balancer values"
    )

    serve = subparsers.add_parser("serve", help="serve stored runs over HTTP")
    serve.add_argument("--runs-dir", type=Path, default=Path("runs"))
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--verbose", action="store_true")
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"seed: must be non-negative, got {args.seed}")
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


def _run(args: argparse.Namespace) -> RunManifest | None:
    if args.command == "serve":
        os.environ["FEDINIT_RUNS_DIR"] = str(args.runs_dir)
        uvicorn.run("fedinit.app.main:app", host=args.host, port=args.port)
        return None

    cfg = _load(args)
    repository = FilesystemArtifactRepository(args.out)
    if args.command == "pretrain":
        return PretrainUseCase(repository, args.threads).execute(cfg)
    if args.command == "downstream":
        blob = args.model.read_bytes()
        return DownstreamUseCase(repository, args.threads).execute(cfg, blob, args.model.stem)
    if args.command == "compare":
        return CompareUseCase(repository, args.threads).execute(cfg)
    return GammaSweepUseCase(repository, args.threads).execute(cfg, args.gammas)


def main(argv: Sequence[str] | None = None) -> int:
    """Parses arguments, runs the subcommand and returns the exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        manifest = _run(args)
    except (ConfigError, InvalidInputError, FileNotFoundError) as exc:
        logger.error("Invalid input: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception:
        logger.exception("Run failed")
        return EXIT_FAILURE
    if manifest is not None:
        print(manifest.run_id)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
