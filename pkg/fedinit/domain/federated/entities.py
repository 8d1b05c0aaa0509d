"""This module defines the entities of the round-based federated runtime."""

from collections.abc import Callable
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from fedinit.domain.errors import InvalidInputError
from fedinit.domain.model.entities import ParameterVector

_MASK64 = 0xFFFFFFFFFFFFFFFF


class StreamTag(IntEnum):
    """Purpose of a random stream; keeps streams of different roles independent."""

    SELECTION = 1
    CLIENT = 2
    SERVER_SPLIT = 3
    SERVER_REFINE = 4
    DATA = 5
    TASK = 6
    INIT = 7


@dataclass(frozen=True)
class RngPolicy:
    """Derives order-independent random streams from one master seed.

    A stream is a pure function of (master_seed, tag, *keys), so the stream a
    client trains with in a round does not depend on which other clients ran
    before it or on how many threads were used.
    """

    master_seed: int

    def stream(self, tag: StreamTag, *keys: int) -> np.random.Generator:
        entropy = [self.master_seed & _MASK64, int(tag), *(k & _MASK64 for k in keys)]
        return np.random.default_rng(np.random.SeedSequence(entropy))

    def derive_seed(self, tag: StreamTag, *keys: int) -> int:
        entropy = [self.master_seed & _MASK64, int(tag), *(k & _MASK64 for k in keys)]
        return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])

    def child(self, tag: StreamTag, *keys: int) -> "RngPolicy":
        """Independent policy for a sub-experiment (e.g. one downstream task)."""
        return RngPolicy(self.derive_seed(tag, *keys))


@dataclass(frozen=True)
class RoundConfig:
    """Round schedule and local-training hyperparameters."""

    rounds: int
    participants_per_round: int
    local_iters: int = 5
    local_lr: float = 1e-3
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.rounds < 0:
            raise InvalidInputError("rounds must be non-negative")
        if self.participants_per_round < 1:
            raise InvalidInputError("participants_per_round must be at least 1")
        if self.local_iters < 0:
            raise InvalidInputError("local_iters must be non-negative")
        if self.local_lr < 0:
            raise InvalidInputError("local_lr must be non-negative")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be at least 1")


@dataclass(frozen=True)
class ClientUpdate:
    """A participant's trained parameters with the sample count used as its weight."""

    client_id: int
    params: ParameterVector
    n_samples: int
    loss: float = 0.0

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise InvalidInputError("n_samples must be at least 1")


@dataclass(frozen=True)
class RoundTelemetry:
    """Summary of one completed round, handed to `on_round` callbacks."""

    round_index: int
    participants: tuple[int, ...]
    mean_client_loss: float


RoundCallback = Callable[[RoundTelemetry], None]
