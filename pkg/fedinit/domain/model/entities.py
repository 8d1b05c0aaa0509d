"""This module defines the core entities of the dense classifier.

Parameters and gradients are plain one-dimensional float64 numpy arrays; the
layout is, for every layer in order, the row-major weight matrix
(fan_in x fan_out) followed by the bias vector (fan_out).
"""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from fedinit.domain.errors import InvalidInputError

ParameterVector = NDArray[np.float64]
GradientVector = NDArray[np.float64]


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of a dense ReLU network; no hidden layers means softmax regression."""

    input_dim: int
    n_classes: int
    hidden_dims: tuple[int, ...] = field(default=())
    activation: Literal["relu"] = "relu"

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise InvalidInputError("input_dim must be a positive integer")
        if self.n_classes < 2:
            raise InvalidInputError("n_classes must be at least 2")
        if any(h < 1 for h in self.hidden_dims):
            raise InvalidInputError("hidden_dims must contain positive integers")
        if self.activation != "relu":
            raise InvalidInputError(f"Unsupported activation: {self.activation}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        """Widths of every layer, input first and classes last."""
        return (self.input_dim, *self.hidden_dims, self.n_classes)

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) of every weight layer."""
        dims = self.layer_dims
        return list(zip(dims[:-1], dims[1:], strict=True))


@dataclass(frozen=True)
class Batch:
    """Features (n x input_dim) with their integer labels."""

    features: NDArray[np.float64]
    labels: NDArray[np.int64]

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise InvalidInputError("Batch features must be a 2-D matrix")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise InvalidInputError("Batch label count must match the feature rows")
        if features.shape[0] < 1:
            raise InvalidInputError("Batch must contain at least one sample")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])
