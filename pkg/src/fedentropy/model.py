"""Dense softmax classifier with analytic gradients and momentum SGD.

The model is a plain linear softmax classifier by default; an optional
single tanh hidden layer can be enabled through ``hidden_units``. All math
is float64 numpy, all randomness comes from generators passed in by the
caller.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class Gradients(NamedTuple):
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class Batch:
    """A labeled minibatch: inputs (n, d) and integer class labels (n,)."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ValueError(f"inputs must be 2-D, got shape {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match "
                f"{self.inputs.shape[0]} input rows"
            )

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


@dataclass
class ModelParams:
    """Parameters of the classifier plus the optimizer velocity buffers.

    ``weights[i]`` has shape (fan_in, fan_out) and ``biases[i]`` shape
    (fan_out,). Velocity buffers mirror the parameter shapes and start at
    zero; they belong to the local SGD run, so fresh copies (broadcast,
    aggregation) always carry zero velocity.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    vel_weights: list[np.ndarray]
    vel_biases: list[np.ndarray]

    @classmethod
    def init(
        cls,
        input_dim: int,
        class_count: int,
        hidden_units: int = 0,
        rng: np.random.Generator | None = None,
        scale: float = 0.05,
    ) -> "ModelParams":
        """Create a model with uniform(-scale, scale) weights, zero biases."""
        if input_dim < 1 or class_count < 2:
            raise ValueError("need input_dim >= 1 and class_count >= 2")
        if hidden_units < 0:
            raise ValueError("hidden_units must be >= 0")
        sizes = [input_dim, class_count] if hidden_units == 0 else [input_dim, hidden_units, class_count]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                w = rng.uniform(-scale, scale, size=(fan_in, fan_out))
            weights.append(w)
            biases.append(np.zeros(fan_out))
        return cls.from_arrays(weights, biases)

    @classmethod
    def from_arrays(cls, weights: list[np.ndarray], biases: list[np.ndarray]) -> "ModelParams":
        return cls(
            weights=[np.asarray(w, dtype=np.float64) for w in weights],
            biases=[np.asarray(b, dtype=np.float64) for b in biases],
            vel_weights=[np.zeros_like(w) for w in weights],
            vel_biases=[np.zeros_like(b) for b in biases],
        )

    def clone(self) -> "ModelParams":
        return ModelParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            vel_weights=[v.copy() for v in self.vel_weights],
            vel_biases=[v.copy() for v in self.vel_biases],
        )

    def reset_velocity(self) -> None:
        self.vel_weights = [np.zeros_like(w) for w in self.weights]
        self.vel_biases = [np.zeros_like(b) for b in self.biases]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def class_count(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    @property
    def size_bytes(self) -> int:
        # float64 parameters; velocity is optimizer state, never uploaded
        return self.param_count * 8

    def same_shape(self, other: "ModelParams") -> bool:
        return len(self.weights) == len(other.weights) and all(
            a.shape == b.shape for a, b in zip(self.weights, other.weights)
        ) and all(a.shape == b.shape for a, b in zip(self.biases, other.biases))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; accepts a single vector or a matrix of rows."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("softmax input contains non-finite values")
    if logits.shape[-1] < 2:
        raise ValueError("softmax needs at least 2 classes")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def forward(model: ModelParams, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run the model on (n, d) inputs; returns (logits, probs), both (n, c)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != model.input_dim:
        raise ValueError(
            f"inputs shape {inputs.shape} does not match model input dim {model.input_dim}"
        )
    h = inputs
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.tanh(h @ w + b)
    logits = h @ model.weights[-1] + model.biases[-1]
    return logits, softmax(logits)


def loss_and_grad(
    model: ModelParams,
    batch: Batch,
    proximal: tuple[float, ModelParams] | None = None,
) -> tuple[float, Gradients]:
    """Mean cross-entropy loss and its exact gradients.

    With ``proximal=(mu, anchor)`` the loss gains (mu/2)*||w - anchor||^2
    summed over every weight and bias tensor, and the gradients gain
    mu*(w - anchor).
    """
    if batch.size == 0:
        raise ValueError("batch is empty")
    if proximal is not None and not model.same_shape(proximal[1]):
        raise ValueError("proximal anchor shape does not match model")

    n = batch.size
    activations = [np.asarray(batch.inputs, dtype=np.float64)]
    h = activations[0]
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.tanh(h @ w + b)
        activations.append(h)
    logits = h @ model.weights[-1] + model.biases[-1]
    probs = softmax(logits)

    log_probs = np.log(probs[np.arange(n), batch.labels])
    loss = -float(log_probs.mean())

    grad_w = [np.empty(0)] * len(model.weights)
    grad_b = [np.empty(0)] * len(model.biases)
    delta = probs.copy()
    delta[np.arange(n), batch.labels] -= 1.0
    delta /= n
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = activations[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            # d tanh(z) = 1 - tanh(z)^2, and activations[i] already holds tanh(z)
            delta = (delta @ model.weights[i].T) * (1.0 - activations[i] ** 2)

    if proximal is not None:
        mu, anchor = proximal
        if mu:
            for i in range(len(model.weights)):
                dw = model.weights[i] - anchor.weights[i]
                db = model.biases[i] - anchor.biases[i]
                loss += 0.5 * mu * (float(np.sum(dw * dw)) + float(np.sum(db * db)))
                grad_w[i] = grad_w[i] + mu * dw
                grad_b[i] = grad_b[i] + mu * db

    return loss, Gradients(weights=grad_w, biases=grad_b)


def sgd_step(model: ModelParams, grads: Gradients, lr: float, momentum: float) -> ModelParams:
    """One momentum-SGD step: v <- momentum*v + g; w <- w - lr*v.

    Pure: returns a new ModelParams, the input is untouched.
    """
    if lr < 0:
        raise ValueError("lr must be >= 0")
    if not 0 <= momentum < 1:
        raise ValueError("momentum must be in [0, 1)")
    if len(grads.weights) != len(model.weights) or any(
        g.shape != w.shape for g, w in zip(grads.weights, model.weights)
    ) or any(g.shape != b.shape for g, b in zip(grads.biases, model.biases)):
        raise ValueError("gradient shapes do not match model")

    vel_w = [momentum * v + g for v, g in zip(model.vel_weights, grads.weights)]
    vel_b = [momentum * v + g for v, g in zip(model.vel_biases, grads.biases)]
    return ModelParams(
        weights=[w - lr * v for w, v in zip(model.weights, vel_w)],
        biases=[b - lr * v for b, v in zip(model.biases, vel_b)],
        vel_weights=vel_w,
        vel_biases=vel_b,
    )


def finite_diff_grad(
    model: ModelParams,
    batch: Batch,
    proximal: tuple[float, ModelParams] | None = None,
    step: float = 1e-5,
) -> Gradients:
    """Central finite-difference gradients of the same loss; test oracle only."""

    def loss_at(m: ModelParams) -> float:
        return loss_and_grad(m, batch, proximal)[0]

    grad_w = []
    grad_b = []
    work = model.clone()
    for arrays, grads in ((work.weights, grad_w), (work.biases, grad_b)):
        for arr in arrays:
            g = np.zeros_like(arr)
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)
            for j in range(flat.size):
                original = flat[j]
                flat[j] = original + step
                up = loss_at(work)
                flat[j] = original - step
                down = loss_at(work)
                flat[j] = original
                gflat[j] = (up - down) / (2.0 * step)
            grads.append(g)
    return Gradients(weights=grad_w, biases=grad_b)
