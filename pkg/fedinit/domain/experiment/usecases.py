"""This module contains the use cases behind the command line and the results API.

Run use cases build data, pre-train, evaluate and persist their outputs
through an ArtifactRepository. A run's manifest is stored before any result
and again, with phase timings, once the run has finished.
"""

import hashlib
import logging
import time
from collections.abc import Iterator
from contextlib import contextmanager

from fedinit import __version__
from fedinit.domain.coprefl.entities import BalancerConfig
from fedinit.domain.downstream.entities import SuiteReport
from fedinit.domain.errors import InvalidInputError
from fedinit.domain.experiment.codec import (
    comparison_csv,
    comparison_row,
    decode_model,
    encode_model,
    gamma_sweep_csv,
    histogram_csv,
    history_csv,
    parse_comparison_csv,
    suite_csv,
    suite_json,
)
from fedinit.domain.experiment.pipeline import (
    COPREFL_METHODS,
    build_experiment_data,
    evaluate_initialization,
    model_spec,
    pretrain_method,
)
from fedinit.domain.experiment.schema import (
    ComparisonResponse,
    ExperimentConfig,
    RunListResponse,
    RunManifest,
)
from fedinit.domain.federated.entities import RoundTelemetry
from fedinit.domain.federated.pool import ClientPool
from fedinit.interfaces.artifacts import ArtifactRepository

logger = logging.getLogger(__name__)

COMPARISON_NAME = "comparison.csv"
GAMMA_SWEEP_NAME = "gamma_sweep.csv"


def run_id_for(command: str, cfg: ExperimentConfig, extra: bytes = b"") -> str:
    """Deterministic run identifier: same command, config and inputs give the same id."""
    digest = hashlib.sha256(command.encode() + cfg.model_dump_json().encode() + extra)
    return f"{command}-s{cfg.seed}-{digest.hexdigest()[:10]}"


def log_round(telemetry: RoundTelemetry) -> None:
    logger.info(
        "Round %d: participants=%s mean_client_loss=%.6f",
        telemetry.round_index,
        list(telemetry.participants),
        telemetry.mean_client_loss,
    )


class _RunUseCase:
    """Shared plumbing of the use cases that produce a run directory."""

    command = ""

    def __init__(self, artifact_repository: ArtifactRepository, threads: int = 1) -> None:
        self.artifact_repository = artifact_repository
        self.threads = threads

    def _open(self, cfg: ExperimentConfig, extra: bytes = b"") -> RunManifest:
        manifest = RunManifest(
            run_id=run_id_for(self.command, cfg, extra),
            command=self.command,
            code_version=__version__,
            config=cfg.model_dump(),
        )
        self.artifact_repository.save_manifest(manifest)
        logger.info("Started %s run %s", self.command, manifest.run_id)
        return manifest

    def _write(self, manifest: RunManifest, key: str, name: str, content: str | bytes) -> None:
        blob = content.encode() if isinstance(content, str) else content
        location = self.artifact_repository.write(manifest.run_id, name, blob)
        manifest.outputs.setdefault(key, []).append(location)

    @contextmanager
    def _phase(self, manifest: RunManifest, phase: str) -> Iterator[None]:
        started = time.perf_counter()
        yield
        elapsed = time.perf_counter() - started
        manifest.phase_seconds[phase] = elapsed
        logger.info("Phase %s took %.2fs", phase, elapsed)

    def _write_suite(self, manifest: RunManifest, key: str, report: SuiteReport) -> None:
        self._write(manifest, key, f"suite_{key}.json", suite_json(report))
        self._write(manifest, key, f"suite_{key}.csv", suite_csv(report))
        self._write(manifest, key, f"histogram_{key}.csv", histogram_csv(report))
        manifest.task_classes[key] = [list(classes) for classes in report.task_classes]

    def _close(self, manifest: RunManifest) -> RunManifest:
        self.artifact_repository.save_manifest(manifest)
        logger.info("Finished %s run %s", self.command, manifest.run_id)
        return manifest


class PretrainUseCase(_RunUseCase):
    """Use case for pre-training one initialization with the configured method."""

    command = "pretrain"

    def execute(self, cfg: ExperimentConfig) -> RunManifest:
        """Builds the data, pre-trains and stores the model binary and history CSV.

        Args:
            cfg: The validated experiment configuration.

        Raises:
            InvalidInputError: If the data or method cannot be built from the config.

        Returns:
            The manifest of the finished run.
        """
        method = cfg.pretrain.method
        manifest = self._open(cfg)
        with self._phase(manifest, "data"):
            data = build_experiment_data(cfg)
        with ClientPool(self.threads) as pool, self._phase(manifest, f"pretrain:{method}"):
            result = pretrain_method(cfg, method, data, pool=pool, on_round=log_round)
        self._write(manifest, method, f"model_{method}.bin", encode_model(data.spec, result.final_params))
        self._write(manifest, method, f"history_{method}.csv", history_csv(result.history))
        return self._close(manifest)


class DownstreamUseCase(_RunUseCase):
    """Use case for scoring a stored initialization on the downstream task suite."""

    command = "downstream"

    def execute(self, cfg: ExperimentConfig, model_blob: bytes, label: str = "model") -> RunManifest:
        """Decodes the model, checks it against the config and runs the suite.

        Args:
            cfg: The validated experiment configuration.
            model_blob: Content of a model binary.
            label: Name used for the suite's output files.

        Raises:
            InvalidInputError: If the model is malformed or its architecture
                differs from the one the config implies.

        Returns:
            The manifest of the finished run.
        """
        spec, params = decode_model(model_blob)
        expected = model_spec(cfg)
        if spec != expected:
            raise InvalidInputError(
                f"Model layers {list(spec.layer_dims)} do not match the configured {list(expected.layer_dims)}"
            )
        manifest = self._open(cfg, hashlib.sha256(model_blob).digest())
        with self._phase(manifest, "data"):
            data = build_experiment_data(cfg)
        with ClientPool(self.threads) as pool, self._phase(manifest, f"downstream:{label}"):
            report = evaluate_initialization(cfg, spec, params, data.downstream_pool, pool=pool)
        self._write_suite(manifest, label, report)
        return self._close(manifest)


class CompareUseCase(_RunUseCase):
    """Use case for pre-training several methods and scoring them on the same tasks."""

    command = "compare"

    def execute(self, cfg: ExperimentConfig) -> RunManifest:
        """Runs every method in `pretrain.compare` and writes the comparison table.

        All methods share the data, the initial model and the downstream
        task seeds, so their rows differ only through pre-training.

        Args:
            cfg: The validated experiment configuration.

        Raises:
            InvalidInputError: If fewer than two methods are listed.

        Returns:
            The manifest of the finished run.
        """
        methods = cfg.pretrain.compare
        if len(methods) < 2:
            raise InvalidInputError("pretrain.compare must list at least two methods")
        manifest = self._open(cfg)
        with self._phase(manifest, "data"):
            data = build_experiment_data(cfg)
        rows = []
        with ClientPool(self.threads) as pool:
            for method in methods:
                with self._phase(manifest, f"pretrain:{method}"):
                    result = pretrain_method(cfg, method, data, pool=pool, on_round=log_round)
                self._write(manifest, method, f"model_{method}.bin", encode_model(data.spec, result.final_params))
                self._write(manifest, method, f"history_{method}.csv", history_csv(result.history))
                with self._phase(manifest, f"downstream:{method}"):
                    report = evaluate_initialization(
                        cfg, data.spec, result.final_params, data.downstream_pool, pool=pool
                    )
                self._write_suite(manifest, method, report)
                rows.append(comparison_row(method, report))
        self._write(manifest, "comparison", COMPARISON_NAME, comparison_csv(rows))
        return self._close(manifest)


class GammaSweepUseCase(_RunUseCase):
    """Use case for measuring the effect of the balancer on downstream fairness."""

    command = "gamma-sweep"

    def execute(self, cfg: ExperimentConfig, gammas: list[float]) -> RunManifest:
        """Pre-trains the configured meta-learning method once per gamma and scores it.

        Args:
            cfg: The validated experiment configuration.
            gammas: Balancer values, each in [0, 1].

        Raises:
            InvalidInputError: If no gamma is given, one is outside [0, 1], or
                the configured method has no balancer.

        Returns:
            The manifest of the finished run.
        """
        method = cfg.pretrain.method
        if method not in COPREFL_METHODS:
            raise InvalidInputError(f"Method {method} has no balancer to sweep")
        if not gammas:
            raise InvalidInputError("At least one gamma is required")
        for gamma in gammas:
            BalancerConfig(gamma, cfg.pretrain.meta_lr)
        manifest = self._open(cfg, repr([float(g) for g in gammas]).encode())
        with self._phase(manifest, "data"):
            data = build_experiment_data(cfg)
        rows: list[tuple[float, SuiteReport]] = []
        with ClientPool(self.threads) as pool:
            for gamma in gammas:
                key = f"gamma_{gamma:g}"
                with self._phase(manifest, f"pretrain:{key}"):
                    result = pretrain_method(cfg, method, data, gamma=gamma, pool=pool, on_round=log_round)
                self._write(manifest, key, f"history_{key}.csv", history_csv(result.history))
                with self._phase(manifest, f"downstream:{key}"):
                    report = evaluate_initialization(
                        cfg, data.spec, result.final_params, data.downstream_pool, pool=pool
                    )
                self._write_suite(manifest, key, report)
                rows.append((gamma, report))
        self._write(manifest, "gamma_sweep", GAMMA_SWEEP_NAME, gamma_sweep_csv(rows))
        return self._close(manifest)


class ListRunsUseCase:
    """Use case for listing stored runs."""

    def __init__(self, artifact_repository: ArtifactRepository) -> None:
        self.artifact_repository = artifact_repository

    def execute(self) -> RunListResponse:
        return RunListResponse(runs=self.artifact_repository.list_runs())


class GetRunUseCase:
    """Use case for fetching the manifest of one run."""

    def __init__(self, artifact_repository: ArtifactRepository) -> None:
        self.artifact_repository = artifact_repository

    def execute(self, run_id: str) -> RunManifest:
        """Looks up a run's manifest.

        Args:
            run_id: Identifier of the run.

        Raises:
            ValueError: If the run does not exist.

        Returns:
            The stored RunManifest.
        """
        manifest = self.artifact_repository.find_manifest(run_id)
        if manifest is None:
            raise ValueError(f"Run {run_id} not found")
        return manifest


class GetComparisonUseCase:
    """Use case for fetching the comparison table of a compare run."""

    def __init__(self, artifact_repository: ArtifactRepository) -> None:
        self.artifact_repository = artifact_repository

    def execute(self, run_id: str) -> ComparisonResponse:
        """Reads and parses a run's comparison CSV.

        Args:
            run_id: Identifier of a compare run.

        Raises:
            ValueError: If the run has no comparison table.

        Returns:
            The comparison rows in method order.
        """
        content = self.artifact_repository.read(run_id, COMPARISON_NAME)
        if content is None:
            raise ValueError(f"Run {run_id} has no comparison table")
        return ComparisonResponse(run_id=run_id, rows=parse_comparison_csv(content.decode()))
