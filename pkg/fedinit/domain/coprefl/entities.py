"""This module defines the entities of the balanced meta-learning pre-training."""

from dataclasses import dataclass, field

from fedinit.domain.errors import InvalidInputError
from fedinit.domain.model.entities import ParameterVector


@dataclass(frozen=True)
class BalancerConfig:
    """Weight between total query loss (gamma) and its variance (1 - gamma), plus the meta step size."""

    gamma: float
    meta_lr: float = 1e-3

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidInputError("gamma must lie in [0, 1]")
        if self.meta_lr < 0:
            raise InvalidInputError("meta_lr must be non-negative")


@dataclass(frozen=True)
class MetaLossReport:
    """Per-participant query losses and the quantities derived from them.

    `total` is the sum of the losses while `variance` is centered on their
    mean; `combined` blends the two as gamma * total + (1 - gamma) * variance.
    """

    per_client_losses: tuple[float, ...]
    total: float
    mean: float
    variance: float
    combined: float
    gamma: float


@dataclass(frozen=True)
class PretrainResult:
    """Final pre-trained parameters and one report per round (empty for baselines)."""

    final_params: ParameterVector
    history: list[MetaLossReport] = field(default_factory=list)
