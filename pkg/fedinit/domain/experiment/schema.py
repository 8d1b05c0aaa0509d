"""This module defines the Pydantic schemas of experiment configuration and run outputs.

The configuration models mirror the sections of an experiment TOML file.
Unknown keys are rejected and every field is checked against the
preconditions of the operation that consumes it, so a bad file fails at load
time instead of halfway through a run.
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from fedinit.domain.data.partition import round_half_up

PretrainMethod = Literal[
    "coprefl_s1",
    "coprefl_s2",
    "coprefl_sgd",
    "fedavg",
    "fedmeta",
    "qffl",
    "centralized",
    "random",
]


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelBlock(_Block):
    """Hidden layer widths of the MLP; the input and head widths follow the data."""

    hidden_dims: list[int] = Field(default_factory=lambda: [16])

    @model_validator(mode="after")
    def check_widths(self) -> "ModelBlock":
        if any(width < 1 for width in self.hidden_dims):
            raise ValueError("hidden_dims entries must be positive")
        return self


class DatasetBlock(_Block):
    """Synthetic Gaussian-mixture source and its pre-training/downstream class split."""

    n_classes: int = Field(default=10, ge=2)
    n_per_class: int = Field(default=150, ge=1)
    dim: int = Field(default=16, ge=1)
    separation: float = Field(default=4.0, ge=0)
    pretrain_classes: int = Field(default=5, ge=1)
    server_frac: float = Field(default=0.05, ge=0, lt=1)
    overlap_classes: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_class_split(self) -> "DatasetBlock":
        if self.pretrain_classes >= self.n_classes:
            raise ValueError("pretrain_classes must be smaller than n_classes")
        if self.overlap_classes > self.pretrain_classes:
            raise ValueError("overlap_classes cannot exceed pretrain_classes")
        return self


class PretrainBlock(_Block):
    """Pre-training method and its round schedule."""

    method: PretrainMethod = "coprefl_s1"
    compare: list[PretrainMethod] = Field(default_factory=list)
    n_clients: int = Field(default=100, ge=1)
    participants: int = Field(default=20, ge=1)
    rounds: int = Field(default=50, ge=0)
    local_lr: float = Field(default=1e-3, ge=0)
    meta_lr: float = Field(default=1e-3, ge=0)
    gamma: float = Field(default=0.5, ge=0, le=1)
    q: float = Field(default=1.0, ge=0)
    local_iters: int = Field(default=5, ge=0)
    batch_size: int = Field(default=32, ge=1)
    distribution: Literal["iid", "dirichlet"] = "dirichlet"
    alpha: float = Field(default=0.5, gt=0)
    support_frac: float = Field(default=0.8, gt=0, lt=1)
    server_refine_iters: int = Field(default=5, ge=0)
    hybrid: Literal["none", "refine", "merge"] = "none"

    @model_validator(mode="after")
    def check_participants(self) -> "PretrainBlock":
        if self.participants > self.n_clients:
            raise ValueError("participants cannot exceed n_clients")
        if len(set(self.compare)) != len(self.compare):
            raise ValueError("compare lists a method twice")
        return self


class DownstreamBlock(_Block):
    """Downstream FL tasks used to score an initialization."""

    algorithm: Literal["fedavg", "fedprox", "qffl"] = "fedavg"
    n_way: int = Field(default=5, ge=1)
    n_clients: int = Field(default=10, ge=1)
    n_tasks: int = Field(default=10, ge=1)
    rounds: int = Field(default=10, ge=0)
    local_iters: int = Field(default=5, ge=0)
    lr: float = Field(default=1e-3, ge=0)
    mu: float = Field(default=1.0, ge=0)
    q: float = Field(default=2.0, ge=0)
    distribution: Literal["iid", "dirichlet"] = "dirichlet"
    alpha: float = Field(default=0.5, gt=0)
    batch_size: int = Field(default=32, ge=1)
    train_frac: float = Field(default=0.8, gt=0, lt=1)
    histogram_bins: int = Field(default=20, ge=1)


class ExperimentConfig(_Block):
    """A complete experiment: data, model, pre-training and downstream evaluation."""

    seed: int = Field(default=0, ge=0)
    model: ModelBlock = Field(default_factory=ModelBlock)
    dataset: DatasetBlock = Field(default_factory=DatasetBlock)
    pretrain: PretrainBlock = Field(default_factory=PretrainBlock)
    downstream: DownstreamBlock = Field(default_factory=DownstreamBlock)

    @model_validator(mode="after")
    def check_downstream_classes(self) -> "ExperimentConfig":
        held_out = (
            self.dataset.n_classes
            - self.dataset.pretrain_classes
            + self.dataset.overlap_classes
        )
        if self.downstream.n_way > held_out:
            raise ValueError(
                f"downstream.n_way={self.downstream.n_way} exceeds the {held_out} "
                "classes left for downstream tasks"
            )
        return self

    @model_validator(mode="after")
    def check_sample_counts(self) -> "ExperimentConfig":
        ds, p, d = self.dataset, self.pretrain, self.downstream
        shared_half = ds.n_per_class // 2
        pretrain_samples = (
            ds.pretrain_classes - ds.overlap_classes
        ) * ds.n_per_class + ds.overlap_classes * shared_half
        server = round_half_up(ds.server_frac * pretrain_samples)
        client_pool = pretrain_samples - server
        if 2 * p.n_clients > client_pool:
            raise ValueError(
                f"pretrain.n_clients={p.n_clients} needs at least two samples "
                f"per client, but only {client_pool} pre-training samples are left for clients"
            )

        methods = {p.method, *p.compare}
        if "coprefl_s2" in methods and server < p.participants:
            raise ValueError(
                f"dataset.server_frac={ds.server_frac} gives {server} server samples, "
                f"fewer than the pretrain.participants={p.participants} "
                "that coprefl_s2 splits them into"
            )
        server_users = sorted(methods & {"coprefl_sgd"})
        if p.hybrid != "none":
            server_users += [
                f"{method} with pretrain.hybrid={p.hybrid!r}"
                for method in sorted(methods & {"fedavg", "fedmeta", "qffl"})
            ]
        if server == 0 and server_users:
            raise ValueError(
                "dataset.server_frac leaves no server samples, which "
                f"{', '.join(server_users)} need"
            )

        held_out_sizes = sorted(
            [ds.n_per_class - shared_half] * ds.overlap_classes
            + [ds.n_per_class] * (ds.n_classes - ds.pretrain_classes)
        )
        smallest_task = sum(held_out_sizes[: d.n_way])
        if 2 * d.n_clients > smallest_task:
            raise ValueError(
                f"downstream.n_clients={d.n_clients} needs at least two samples "
                f"per client, but a {d.n_way}-way task can have as few as {smallest_task}"
            )
        return self


class RunManifest(BaseModel):
    """Everything needed to reproduce a run, plus where its outputs went."""

    run_id: str
    command: str
    code_version: str
    config: dict
    outputs: dict[str, list[str]] = Field(default_factory=dict)
    phase_seconds: dict[str, float] = Field(default_factory=dict)
    task_classes: dict[str, list[list[int]]] = Field(default_factory=dict)


class TaskSummary(BaseModel):
    """One downstream task in percentage points."""

    classes: list[int]
    acc: float
    variance: float
    worst10: float
    worst20: float
    worst30: float
    per_client_acc: list[float]


class SuiteSummary(BaseModel):
    """Averages over the downstream tasks in percentage points.

    Variances are in squared percentage points.
    """

    acc: float
    variance: float
    worst10: float
    worst20: float
    worst30: float
    tasks: list[TaskSummary]
    histogram_edges: list[float]
    histogram_counts: list[int]


class ComparisonRow(BaseModel):
    """One row of a method comparison table."""

    method: str
    acc: float
    variance: float
    worst10: float
    worst20: float
    worst30: float


class ComparisonResponse(BaseModel):
    """Schema for the comparison table of a run."""

    run_id: str
    rows: list[ComparisonRow]


class RunListResponse(BaseModel):
    """Schema for the list of stored runs."""

    runs: list[str]
