"""Forward pass, exact backpropagation and plain SGD for the dense classifier.

All functions are pure: inputs are never modified and every call returns
fresh arrays.
"""

import numpy as np
from numpy.typing import NDArray

from fedinit.domain.errors import InvalidInputError
from fedinit.domain.model.entities import (
    Batch,
    GradientVector,
    ModelSpec,
    ParameterVector,
)

Layer = tuple[NDArray[np.float64], NDArray[np.float64]]


def parameter_count(spec: ModelSpec) -> int:
    """Number of scalars in a parameter vector for the given architecture."""
    return sum((fan_in + 1) * fan_out for fan_in, fan_out in spec.layer_shapes)


def unflatten(params: ParameterVector, spec: ModelSpec) -> list[Layer]:
    """Splits a flat parameter vector into per-layer (weights, bias) views.

    Args:
        params: Flat parameter vector.
        spec: Architecture the vector belongs to.

    Raises:
        InvalidInputError: If the vector length does not match the architecture.

    Returns:
        A list of (fan_in x fan_out weight matrix, fan_out bias) pairs.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.shape[0] != parameter_count(spec):
        raise InvalidInputError(
            f"Parameter vector of length {params.size} does not match "
            f"the {parameter_count(spec)} parameters of the model"
        )
    layers: list[Layer] = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes:
        weights = params[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        bias = params[offset : offset + fan_out]
        offset += fan_out
        layers.append((weights, bias))
    return layers


def init_params(spec: ModelSpec, seed: int) -> ParameterVector:
    """Draws zero-mean Gaussian weights scaled by 1/sqrt(fan_in); biases start at zero."""
    rng = np.random.default_rng(np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF))
    chunks: list[NDArray[np.float64]] = []
    for fan_in, fan_out in spec.layer_shapes:
        weights = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
        chunks.append(weights.ravel())
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def _check_batch(spec: ModelSpec, batch: Batch) -> None:
    if batch.features.shape[1] != spec.input_dim:
        raise InvalidInputError(
            f"Batch has {batch.features.shape[1]} features, model expects {spec.input_dim}"
        )
    if batch.labels.min() < 0 or batch.labels.max() >= spec.n_classes:
        raise InvalidInputError(f"Labels must lie in [0, {spec.n_classes})")


def _forward(
    layers: list[Layer], features: NDArray[np.float64]
) -> tuple[list[NDArray[np.float64]], NDArray[np.float64]]:
    """Returns the input of every layer and the output logits."""
    inputs = [features]
    out = features
    for index, (weights, bias) in enumerate(layers):
        out = out @ weights + bias
        if index < len(layers) - 1:
            out = np.maximum(out, 0.0)
            inputs.append(out)
    return inputs, out


def _log_softmax(logits: NDArray[np.float64]) -> NDArray[np.float64]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def logits(params: ParameterVector, spec: ModelSpec, features: NDArray[np.float64]) -> NDArray[np.float64]:
    """Raw class scores for a feature matrix."""
    _, out = _forward(unflatten(params, spec), np.asarray(features, dtype=np.float64))
    return out


def forward_loss(
    params: ParameterVector, spec: ModelSpec, batch: Batch
) -> tuple[float, NDArray[np.float64]]:
    """Mean cross-entropy of the batch and the softmax probabilities.

    Raises:
        InvalidInputError: On any dimension or label mismatch.
    """
    _check_batch(spec, batch)
    log_probs = _log_softmax(logits(params, spec, batch.features))
    rows = np.arange(len(batch))
    loss = float(-log_probs[rows, batch.labels].mean())
    return max(loss, 0.0), np.exp(log_probs)


def gradient(params: ParameterVector, spec: ModelSpec, batch: Batch) -> GradientVector:
    """Exact gradient of `forward_loss` with respect to the flat parameters.

    Raises:
        InvalidInputError: On any dimension or label mismatch.
    """
    _check_batch(spec, batch)
    layers = unflatten(params, spec)
    inputs, out = _forward(layers, batch.features)
    n = len(batch)
    delta = np.exp(_log_softmax(out))
    delta[np.arange(n), batch.labels] -= 1.0
    delta /= n

    grads: list[NDArray[np.float64]] = []
    for index in range(len(layers) - 1, -1, -1):
        weights, _ = layers[index]
        layer_input = inputs[index]
        grads.append(delta.sum(axis=0))
        grads.append((layer_input.T @ delta).ravel())
        if index > 0:
            # ReLU passes gradient only where the unit was active.
            delta = (delta @ weights.T) * (layer_input > 0.0)
    return np.concatenate(grads[::-1])


def sgd_step(params: ParameterVector, grad: GradientVector, lr: float) -> ParameterVector:
    """One plain gradient-descent step: params - lr * grad.

    Raises:
        InvalidInputError: If the vectors differ in length or lr is negative.
    """
    if params.shape != grad.shape:
        raise InvalidInputError("Parameter and gradient vectors differ in length")
    if lr < 0:
        raise InvalidInputError("Learning rate must be non-negative")
    if lr == 0:
        return params.copy()
    return params - lr * grad


def predict(params: ParameterVector, spec: ModelSpec, features: NDArray[np.float64]) -> NDArray[np.int64]:
    """Predicted classes; np.argmax already resolves ties toward the lowest index."""
    return np.argmax(logits(params, spec, features), axis=1).astype(np.int64)


def accuracy(params: ParameterVector, spec: ModelSpec, batch: Batch) -> float:
    """Fraction of samples whose predicted class equals the label."""
    _check_batch(spec, batch)
    return float(np.mean(predict(params, spec, batch.features) == batch.labels))
