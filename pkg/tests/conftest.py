"""This module defines shared Pytest fixtures for the test suite.

Fixtures defined here are automatically available to all tests in the
`tests` directory and its subdirectories. They provide a mocked artifact
repository for use case tests and small, fast toy problems for the
numerical modules.
"""

from unittest.mock import MagicMock

import numpy as np
import pytest

from fedinit.domain.data.entities import ClientShard, LabeledDataset
from fedinit.domain.data.partition import (
    dirichlet_partition,
    support_query_split,
    synth_dataset,
)
from fedinit.domain.experiment.schema import ExperimentConfig
from fedinit.domain.model.entities import ModelSpec
from fedinit.domain.model.network import init_params
from fedinit.interfaces.artifacts import ArtifactRepository


@pytest.fixture
def mock_artifact_repository() -> MagicMock:
    """Pytest fixture that provides a mock ArtifactRepository.

    Returns:
        A MagicMock instance configured to spec ArtifactRepository.
    """
    return MagicMock(spec=ArtifactRepository)


@pytest.fixture
def toy_spec() -> ModelSpec:
    return ModelSpec(input_dim=4, n_classes=3, hidden_dims=(5,))


@pytest.fixture
def toy_init(toy_spec) -> np.ndarray:
    return init_params(toy_spec, seed=42)


@pytest.fixture
def toy_dataset() -> LabeledDataset:
    """Three well separated classes, 20 samples each, in four dimensions."""
    return synth_dataset(n_classes=3, n_per_class=20, dim=4, separation=3.0, seed=7)


@pytest.fixture
def toy_clients(toy_dataset) -> list[LabeledDataset]:
    """Six non-IID clients holding at least four samples each."""
    return dirichlet_partition(toy_dataset, n_clients=6, alpha=1.0, seed=11, min_size=4)


@pytest.fixture
def toy_shards(toy_clients) -> list[ClientShard]:
    return [
        support_query_split(data, support_frac=0.5, seed=100 + client, client_id=client)
        for client, data in enumerate(toy_clients)
    ]


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    """A complete experiment small enough to run end to end in well under a second."""
    return ExperimentConfig.model_validate(
        {
            "seed": 3,
            "model": {"hidden_dims": [4]},
            "dataset": {
                "n_classes": 6,
                "n_per_class": 30,
                "dim": 4,
                "separation": 3.0,
                "pretrain_classes": 3,
                "server_frac": 0.1,
            },
            "pretrain": {
                "method": "coprefl_s1",
                "compare": ["fedavg", "coprefl_s1"],
                "n_clients": 6,
                "participants": 3,
                "rounds": 2,
                "local_lr": 0.05,
                "meta_lr": 0.05,
                "local_iters": 2,
                "batch_size": 8,
            },
            "downstream": {
                "n_way": 3,
                "n_clients": 3,
                "n_tasks": 2,
                "rounds": 2,
                "local_iters": 2,
                "lr": 0.05,
                "batch_size": 8,
            },
        }
    )
