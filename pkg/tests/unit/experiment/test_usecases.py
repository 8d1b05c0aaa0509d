import numpy as np
import pytest

from fedinit.domain.errors import InvalidInputError
from fedinit.domain.experiment.codec import decode_model, encode_model, parse_comparison_csv
from fedinit.domain.experiment.schema import (
    ComparisonResponse,
    ExperimentConfig,
    RunListResponse,
    RunManifest,
)
from fedinit.domain.experiment.usecases import (
    COMPARISON_NAME,
    GAMMA_SWEEP_NAME,
    CompareUseCase,
    DownstreamUseCase,
    GammaSweepUseCase,
    GetComparisonUseCase,
    GetRunUseCase,
    ListRunsUseCase,
    PretrainUseCase,
    run_id_for,
)
from fedinit.domain.model.entities import ModelSpec
from fedinit.domain.model.network import init_params
from fedinit.infra.in_memory_repository import InMemoryArtifactRepository


def with_overrides(cfg: ExperimentConfig, section: str, **values) -> ExperimentConfig:
    raw = cfg.model_dump()
    raw[section].update(values)
    return ExperimentConfig.model_validate(raw)


@pytest.fixture
def repository() -> InMemoryArtifactRepository:
    return InMemoryArtifactRepository()


class TestRunId:
    def test_deterministic(self, tiny_config):
        assert run_id_for("compare", tiny_config) == run_id_for("compare", tiny_config)
        assert run_id_for("compare", tiny_config).startswith("compare-s3-")

    def test_depends_on_command_config_and_inputs(self, tiny_config):
        other = with_overrides(tiny_config, "pretrain", rounds=3)

        ids = {
            run_id_for("compare", tiny_config),
            run_id_for("pretrain", tiny_config),
            run_id_for("compare", other),
            run_id_for("compare", tiny_config, b"model"),
        }
        assert len(ids) == 4


class TestPretrainUseCase:
    @pytest.fixture(autouse=True)
    def setup(self, mock_artifact_repository):
        self.artifact_repository = mock_artifact_repository
        self.artifact_repository.write.side_effect = lambda run_id, name, content: f"{run_id}/{name}"
        self.use_case = PretrainUseCase(self.artifact_repository)

    def test_execute_success(self, tiny_config):
        # Act
        manifest = self.use_case.execute(tiny_config)

        # Assert
        assert isinstance(manifest, RunManifest)
        assert manifest.command == "pretrain"
        assert manifest.config == tiny_config.model_dump()
        assert manifest.outputs["coprefl_s1"] == [
            f"{manifest.run_id}/model_coprefl_s1.bin",
            f"{manifest.run_id}/history_coprefl_s1.csv",
        ]
        assert {"data", "pretrain:coprefl_s1"} <= set(manifest.phase_seconds)
        assert self.artifact_repository.save_manifest.call_count == 2

        written = {call.args[1]: call.args[2] for call in self.artifact_repository.write.call_args_list}
        spec, _ = decode_model(written["model_coprefl_s1.bin"])
        assert spec.layer_dims == (4, 4, 3)
        assert len(written["history_coprefl_s1.csv"].decode().splitlines()) == 1 + tiny_config.pretrain.rounds

    def test_random_method_has_an_empty_history(self, tiny_config):
        cfg = with_overrides(tiny_config, "pretrain", method="random")

        self.use_case.execute(cfg)

        written = {call.args[1]: call.args[2] for call in self.artifact_repository.write.call_args_list}
        assert written["history_random.csv"] == b"round,total,mean,variance,combined\n"

    def test_missing_server_data(self, tiny_config):
        # model_copy skips the load-time checks, so the run itself has to refuse
        no_server = with_overrides(tiny_config, "dataset", server_frac=0.0)
        cfg = no_server.model_copy(update={"pretrain": no_server.pretrain.model_copy(update={"method": "coprefl_s2"})})

        with pytest.raises(InvalidInputError):
            self.use_case.execute(cfg)
        self.artifact_repository.write.assert_not_called()


class TestDownstreamUseCase:
    def test_scores_a_pretrained_model(self, repository, tiny_config):
        # Arrange
        pretrained = PretrainUseCase(repository).execute(tiny_config)
        blob = repository.read(pretrained.run_id, "model_coprefl_s1.bin")

        # Act
        manifest = DownstreamUseCase(repository).execute(tiny_config, blob, "model_coprefl_s1")

        # Assert
        assert sorted(manifest.outputs["model_coprefl_s1"]) == sorted(
            f"{manifest.run_id}/{name}"
            for name in ("suite_model_coprefl_s1.json", "suite_model_coprefl_s1.csv", "histogram_model_coprefl_s1.csv")
        )
        assert len(manifest.task_classes["model_coprefl_s1"]) == tiny_config.downstream.n_tasks
        assert repository.find_manifest(manifest.run_id) == manifest

    def test_architecture_mismatch(self, repository, tiny_config):
        spec = ModelSpec(input_dim=4, n_classes=3, hidden_dims=(8,))
        blob = encode_model(spec, init_params(spec, 0))

        with pytest.raises(InvalidInputError, match="do not match"):
            DownstreamUseCase(repository).execute(tiny_config, blob)
        assert repository.list_runs() == []

    def test_not_a_model(self, repository, tiny_config):
        with pytest.raises(InvalidInputError):
            DownstreamUseCase(repository).execute(tiny_config, b"hello world")


class TestCompareUseCase:
    def test_one_row_per_method(self, repository, tiny_config):
        # Act
        manifest = CompareUseCase(repository).execute(tiny_config)

        # Assert
        table = parse_comparison_csv(repository.read(manifest.run_id, COMPARISON_NAME).decode())
        assert [row.method for row in table] == ["fedavg", "coprefl_s1"]
        assert manifest.task_classes["fedavg"] == manifest.task_classes["coprefl_s1"]
        for method in ("fedavg", "coprefl_s1"):
            assert repository.read(manifest.run_id, f"model_{method}.bin") is not None
            assert repository.read(manifest.run_id, f"suite_{method}.json") is not None

    def test_degenerate_meta_method_ties_with_fedavg(self, repository, tiny_config):
        # Arrange
        cfg = with_overrides(tiny_config, "pretrain", compare=["fedavg", "coprefl_s2"], meta_lr=0.0)

        # Act
        manifest = CompareUseCase(repository).execute(cfg)

        # Assert
        fedavg, meta = parse_comparison_csv(repository.read(manifest.run_id, COMPARISON_NAME).decode())
        assert fedavg.model_dump(exclude={"method"}) == meta.model_dump(exclude={"method"})
        assert repository.read(manifest.run_id, "model_fedavg.bin") == repository.read(
            manifest.run_id, "model_coprefl_s2.bin"
        )

    def test_needs_two_methods(self, repository, tiny_config):
        cfg = with_overrides(tiny_config, "pretrain", compare=["fedavg"])

        with pytest.raises(InvalidInputError, match="at least two"):
            CompareUseCase(repository).execute(cfg)

    def test_thread_count_does_not_change_outputs(self, tiny_config):
        serial, threaded = InMemoryArtifactRepository(), InMemoryArtifactRepository()

        first = CompareUseCase(serial, threads=1).execute(tiny_config)
        second = CompareUseCase(threaded, threads=4).execute(tiny_config)

        assert first.run_id == second.run_id
        for name in (COMPARISON_NAME, "model_coprefl_s1.bin", "suite_fedavg.csv", "history_coprefl_s1.csv"):
            assert serial.read(first.run_id, name) == threaded.read(second.run_id, name)


class TestGammaSweepUseCase:
    def test_one_row_per_gamma(self, repository, tiny_config):
        # Act
        manifest = GammaSweepUseCase(repository).execute(tiny_config, [0.0, 1.0])

        # Assert
        lines = repository.read(manifest.run_id, GAMMA_SWEEP_NAME).decode().splitlines()
        assert lines[0] == "gamma,acc,variance"
        assert [line.split(",")[0] for line in lines[1:]] == ["0.0", "1.0"]
        assert {"gamma_0", "gamma_1"} <= set(manifest.outputs)

    def test_gamma_out_of_range(self, repository, tiny_config):
        with pytest.raises(InvalidInputError):
            GammaSweepUseCase(repository).execute(tiny_config, [0.5, 1.5])
        assert repository.list_runs() == []

    def test_method_without_balancer(self, repository, tiny_config):
        cfg = with_overrides(tiny_config, "pretrain", method="fedavg")

        with pytest.raises(InvalidInputError):
            GammaSweepUseCase(repository).execute(cfg, [0.5])

    def test_no_gammas(self, repository, tiny_config):
        with pytest.raises(InvalidInputError):
            GammaSweepUseCase(repository).execute(tiny_config, [])


class TestReadUseCases:
    @pytest.fixture(autouse=True)
    def setup(self, mock_artifact_repository):
        self.artifact_repository = mock_artifact_repository

    def test_list_runs(self):
        self.artifact_repository.list_runs.return_value = ["a", "b"]

        result = ListRunsUseCase(self.artifact_repository).execute()

        assert result == RunListResponse(runs=["a", "b"])

    def test_get_run(self):
        # Arrange
        manifest = RunManifest(run_id="r", command="pretrain", code_version="0.1.0", config={})
        self.artifact_repository.find_manifest.return_value = manifest

        # Act
        result = GetRunUseCase(self.artifact_repository).execute("r")

        # Assert
        assert result == manifest
        self.artifact_repository.find_manifest.assert_called_once_with("r")

    def test_get_run_not_found(self):
        self.artifact_repository.find_manifest.return_value = None

        with pytest.raises(ValueError) as exc:
            GetRunUseCase(self.artifact_repository).execute("missing")
        assert str(exc.value) == "Run missing not found"

    def test_get_comparison(self):
        # Arrange
        self.artifact_repository.read.return_value = (
            b"method,acc,variance,worst10,worst20,worst30\nfedavg,80.00,12.50,60.00,65.00,70.00\n"
        )

        # Act
        result = GetComparisonUseCase(self.artifact_repository).execute("r")

        # Assert
        assert isinstance(result, ComparisonResponse)
        assert result.rows[0].method == "fedavg"
        assert result.rows[0].worst30 == 70.0
        self.artifact_repository.read.assert_called_once_with("r", COMPARISON_NAME)

    def test_get_comparison_missing(self):
        self.artifact_repository.read.return_value = None

        with pytest.raises(ValueError):
            GetComparisonUseCase(self.artifact_repository).execute("r")


def test_models_of_a_compare_run_decode(repository, tiny_config):
    manifest = CompareUseCase(repository).execute(tiny_config)

    fedavg_spec, fedavg = decode_model(repository.read(manifest.run_id, "model_fedavg.bin"))
    _, meta = decode_model(repository.read(manifest.run_id, "model_coprefl_s1.bin"))

    assert fedavg_spec.layer_dims == (4, 4, 3)
    assert not np.array_equal(fedavg, meta)
