"""This module defines the hyperparameter entities of the baseline algorithms."""

from dataclasses import dataclass

from fedinit.domain.errors import InvalidInputError


@dataclass(frozen=True)
class QfflConfig:
    """Loss power of q-FFL; q = 0 is plain FedAvg."""

    q: float = 1.0

    def __post_init__(self) -> None:
        if self.q < 0:
            raise InvalidInputError("q must be non-negative")


@dataclass(frozen=True)
class FedProxConfig:
    """Weight of the proximal term (mu / 2) * ||theta - anchor||^2."""

    mu: float = 1.0

    def __post_init__(self) -> None:
        if self.mu < 0:
            raise InvalidInputError("mu must be non-negative")
