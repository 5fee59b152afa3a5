"""From-scratch multilayer perceptron on a flat parameter vector.

ReLU hidden layers, softmax output, mean cross-entropy loss, plain SGD.
All operations are pure functions over immutable inputs; everything is float64
and bit-deterministic for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

# Probabilities are clamped here before the log so a confident wrong
# prediction yields a large finite loss instead of infinity.
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture descriptor: input width, hidden widths, class count."""

    input_dim: int
    hidden: tuple[int, ...] = (50, 100)
    output_dim: int = 2
    activation: str = "relu"

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden}")
        if self.output_dim < 2:
            raise ValueError(f"output_dim must be >= 2, got {self.output_dim}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def layer_shapes(self) -> tuple[tuple[int, int], ...]:
        """Per-layer (fan_in, fan_out) pairs, input to output."""
        widths = (self.input_dim, *self.hidden, self.output_dim)
        return tuple(zip(widths[:-1], widths[1:]))

    @property
    def n_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_shapes)


@dataclass
class ParameterVector:
    """Every weight and bias flattened into one float64 vector.

    ``layout`` holds the per-layer (fan_in, fan_out) pairs; each layer occupies
    fan_in*fan_out weight entries followed by fan_out bias entries.
    """

    values: np.ndarray
    layout: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.layout = tuple((int(fi), int(fo)) for fi, fo in self.layout)
        expected = sum(fi * fo + fo for fi, fo in self.layout)
        if self.values.ndim != 1 or self.values.size != expected:
            raise ValueError(
                f"parameter vector of shape {self.values.shape} does not match "
                f"layout {self.layout} (expected length {expected})"
            )

    def __len__(self) -> int:
        return self.values.size

    def unpack(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield (weights, biases) views layer by layer."""
        offset = 0
        for fan_in, fan_out in self.layout:
            w = self.values[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = self.values[offset : offset + fan_out]
            offset += fan_out
            yield w, b

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.values.copy(), self.layout)


@dataclass(frozen=True)
class Batch:
    """A block of samples: feature matrix plus integer class labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {self.features.shape}")
        if self.labels.ndim != 1 or len(self.labels) != len(self.features):
            raise ValueError(
                f"labels of shape {self.labels.shape} do not match "
                f"{len(self.features)} feature rows"
            )
        if len(self.labels) and self.labels.min() < 0:
            raise ValueError("labels must be non-negative class indices")

    def __len__(self) -> int:
        return len(self.labels)


def init_params(spec: NetworkSpec, seed: int | np.random.Generator) -> ParameterVector:
    """Fresh parameters: weights ~ N(0, 1/sqrt(fan_in)) per layer, biases zero."""
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in spec.layer_shapes:
        w = rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out))
        chunks.append(w.ravel())
        chunks.append(np.zeros(fan_out))
    return ParameterVector(np.concatenate(chunks), spec.layer_shapes)


def _check_input(params: ParameterVector, batch: Batch) -> None:
    expected = params.layout[0][0]
    if batch.features.shape[1] != expected:
        raise ValueError(
            f"batch has {batch.features.shape[1]} features, network expects {expected}"
        )
    n_classes = params.layout[-1][1]
    if len(batch) and batch.labels.max() >= n_classes:
        raise ValueError(
            f"label {int(batch.labels.max())} out of range for {n_classes} classes"
        )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cached(
    params: ParameterVector, features: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Forward pass keeping pre-activations and activations for backprop."""
    layers = list(params.unpack())
    activations = [features]
    pre_acts: list[np.ndarray] = []
    a = features
    for w, b in layers[:-1]:
        z = a @ w + b
        pre_acts.append(z)
        a = np.maximum(z, 0.0)
        activations.append(a)
    w, b = layers[-1]
    probs = _softmax(a @ w + b)
    return probs, pre_acts, activations


def forward(params: ParameterVector, batch: Batch) -> np.ndarray:
    """Class-probability matrix, one distribution per input row."""
    _check_input(params, batch)
    probs, _, _ = _forward_cached(params, batch.features)
    return probs


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-probability of the true class, probabilities clamped."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("cross_entropy of an empty sample set is undefined")
    if labels.max() >= probs.shape[1]:
        raise ValueError(f"label {int(labels.max())} out of range for {probs.shape[1]} classes")
    p_true = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(p_true, PROB_FLOOR)).mean())


def loss_and_grad(params: ParameterVector, batch: Batch) -> tuple[float, ParameterVector]:
    """Mean cross-entropy and its gradient in one backward pass."""
    _check_input(params, batch)
    if len(batch) == 0:
        raise ValueError("cannot differentiate over an empty batch")
    probs, pre_acts, activations = _forward_cached(params, batch.features)
    n = len(batch)
    labels = batch.labels
    loss = float(-np.log(np.maximum(probs[np.arange(n), labels], PROB_FLOOR)).mean())

    layers = list(params.unpack())
    # softmax + cross-entropy: gradient at the output pre-activation is
    # (probs - one_hot) / n.
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grads: list[np.ndarray] = []
    for idx in range(len(layers) - 1, -1, -1):
        w, _ = layers[idx]
        gw = activations[idx].T @ delta
        gb = delta.sum(axis=0)
        grads.append(gb)
        grads.append(gw.ravel())
        if idx > 0:
            delta = (delta @ w.T) * (pre_acts[idx - 1] > 0)
    grads.reverse()
    return loss, ParameterVector(np.concatenate(grads), params.layout)


def backward(params: ParameterVector, batch: Batch) -> ParameterVector:
    """Gradient of the mean cross-entropy w.r.t. every parameter."""
    return loss_and_grad(params, batch)[1]


def sgd_step(params: ParameterVector, grad: ParameterVector, eta: float) -> ParameterVector:
    """One gradient-descent update: params - eta * grad."""
    if params.layout != grad.layout:
        raise ValueError(f"layout mismatch: {params.layout} vs {grad.layout}")
    return ParameterVector(params.values - eta * grad.values, params.layout)


def evaluate(params: ParameterVector, dataset: Batch) -> tuple[float, np.ndarray]:
    """Full-dataset loss and argmax predictions (ties go to the lower class)."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    probs = forward(params, dataset)
    loss = cross_entropy(probs, dataset.labels)
    predictions = probs.argmax(axis=1)
    return loss, predictions
