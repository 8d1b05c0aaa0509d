"""This module defines downstream task and evaluation entities."""

from dataclasses import dataclass, field
from typing import Literal

from fedinit.domain.data.entities import LabeledDataset
from fedinit.domain.errors import InvalidInputError

WORST_PERCENTILES = (10, 20, 30)


@dataclass(frozen=True)
class TaskParams:
    """How downstream tasks are drawn from the held-out class pool."""

    n_way: int = 5
    n_clients: int = 10
    distribution: Literal["iid", "dirichlet"] = "dirichlet"
    alpha: float = 0.5
    train_frac: float = 0.8

    def __post_init__(self) -> None:
        if self.n_way < 1 or self.n_clients < 1:
            raise InvalidInputError("n_way and n_clients must be positive")
        if self.distribution not in ("iid", "dirichlet"):
            raise InvalidInputError(f"Unknown distribution: {self.distribution}")
        if self.alpha <= 0:
            raise InvalidInputError("alpha must be positive")
        if not 0 < self.train_frac < 1:
            raise InvalidInputError("train_frac must lie in (0, 1)")


@dataclass(frozen=True)
class DownstreamAlgorithm:
    """Downstream FL algorithm with its hyperparameters."""

    name: Literal["fedavg", "fedprox", "qffl"] = "fedavg"
    mu: float = 1.0
    q: float = 2.0

    def __post_init__(self) -> None:
        if self.name not in ("fedavg", "fedprox", "qffl"):
            raise InvalidInputError(f"Unknown downstream algorithm: {self.name}")
        if self.mu < 0 or self.q < 0:
            raise InvalidInputError("mu and q must be non-negative")


@dataclass(frozen=True)
class DownstreamRunParams:
    """Algorithm and training schedule of every downstream task."""

    algorithm: DownstreamAlgorithm = field(default_factory=DownstreamAlgorithm)
    rounds: int = 10
    local_iters: int = 5
    lr: float = 1e-3
    batch_size: int = 32
    histogram_bins: int = 20


@dataclass(frozen=True)
class TaskClient:
    """A downstream client with its train and test splits (labels already remapped)."""

    client_id: int
    train: LabeledDataset
    test: LabeledDataset


@dataclass(frozen=True)
class TaskSpec:
    """One downstream FL task over a class subset of the held-out pool."""

    classes: tuple[int, ...]
    clients: list[TaskClient]
    distribution: str
    alpha: float

    def __post_init__(self) -> None:
        for client in self.clients:
            if len(client.train) == 0 or len(client.test) == 0:
                raise InvalidInputError(
                    f"Task client {client.client_id} needs non-empty train and test splits"
                )


@dataclass(frozen=True)
class TaskMetrics:
    """Per-client test accuracies of a task and their summary statistics (fractions)."""

    per_client_acc: tuple[float, ...]
    mean_acc: float
    acc_variance: float
    worst_k: dict[int, float]


@dataclass(frozen=True)
class SuiteReport:
    """Metrics of X downstream tasks, their averages and the pooled accuracy histogram."""

    per_task: list[TaskMetrics]
    task_classes: list[tuple[int, ...]]
    mean_acc: float
    acc_variance: float
    worst_k: dict[int, float]
    histogram_edges: tuple[float, ...]
    histogram_counts: tuple[int, ...]
