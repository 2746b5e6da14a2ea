"""Minimal dense-network numerics: layers, losses, SGD, gradient verification.

Everything operates on plain 2-D numpy arrays (rows = samples). Public
entry points keep parameters in float32; the math is dtype-generic so the
gradient checker can rerun it in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionError, ParameterError

EPS_PROB = 1e-7  # clamp for log() inside cross-entropy


class Activation(str, Enum):
    IDENTITY = "identity"
    RELU = "relu"
    SIGMOID = "sigmoid"


def as_matrix(x, dtype=np.float32) -> np.ndarray:
    """Coerce to a 2-D array, rejecting non-finite values."""
    a = np.asarray(x, dtype=dtype)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ParameterError("matrix contains NaN/Inf")
    return a


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0)


def softmax(z: np.ndarray, axis: int = 1) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


_ACTIVATIONS = {
    Activation.IDENTITY: lambda z: z,
    Activation.RELU: relu,
    Activation.SIGMOID: sigmoid,
}


@dataclass
class DenseLayer:
    """Fully connected layer: y = act(x @ w.T + b), w is (out, in)."""

    w: np.ndarray
    b: np.ndarray
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        self.w = np.atleast_2d(np.asarray(self.w))
        self.b = np.asarray(self.b).reshape(-1)
        if self.b.shape[0] != self.w.shape[0]:
            raise DimensionError(
                f"bias length {self.b.shape[0]} != output dim {self.w.shape[0]}"
            )
        self.activation = Activation(self.activation)

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.w.copy(), self.b.copy(), self.activation)

    def astype(self, dtype) -> "DenseLayer":
        return DenseLayer(self.w.astype(dtype), self.b.astype(dtype), self.activation)


def init_layer(out_dim: int, in_dim: int, activation: Activation,
               rng: np.random.Generator) -> DenseLayer:
    """Glorot-uniform weights, zero biases, float32."""
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    w = rng.uniform(-limit, limit, size=(out_dim, in_dim)).astype(np.float32)
    b = np.zeros(out_dim, dtype=np.float32)
    return DenseLayer(w, b, activation)


def forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise DimensionError(
            f"input has {x.shape[1] if x.ndim == 2 else '?'} columns, "
            f"layer expects {layer.in_dim}"
        )
    return _ACTIVATIONS[layer.activation](x @ layer.w.T + layer.b)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


def cross_entropy_loss(target: np.ndarray, prediction: np.ndarray) -> float:
    """Mean elementwise binary cross-entropy, normalized by rows and columns."""
    _check_same_shape(target, prediction)
    p = np.clip(prediction, EPS_PROB, 1.0 - EPS_PROB)
    return float(-np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p)))


def squared_error(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Euclidean distance per row divided by the column count, averaged over rows."""
    _check_same_shape(a, b)
    d = a - b
    return float(np.mean(d * d))


def squared_error_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-row dimension-normalized squared distance."""
    _check_same_shape(a, b)
    d = a - b
    return np.mean(d * d, axis=1)


def distillation_loss(old_logits: np.ndarray, new_logits: np.ndarray,
                      temperature: float = 2.0) -> float:
    """Cross-entropy between the temperature-softened old and new distributions.

    The old distribution is a fixed target; the minimum over new_logits is
    the target's own entropy, reached at old == new.
    """
    _check_same_shape(old_logits, new_logits)
    if temperature <= 0:
        raise ParameterError("temperature must be positive")
    target = softmax(old_logits / temperature)
    p = np.clip(softmax(new_logits / temperature), EPS_PROB, 1.0)
    return float(-np.mean(np.sum(target * np.log(p), axis=1)))


def softmax_cross_entropy(logits: np.ndarray, onehot: np.ndarray) -> float:
    _check_same_shape(logits, onehot)
    p = np.clip(softmax(logits), EPS_PROB, 1.0)
    return float(-np.mean(np.sum(onehot * np.log(p), axis=1)))


@dataclass
class SgdConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ParameterError("momentum must be in [0, 1)")
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")


def sgd_step(params, grads, config: SgdConfig, velocity):
    """One momentum-SGD update: v <- mu*v - lr*g; p <- p + v. Returns new lists."""
    if not (len(params) == len(grads) == len(velocity)):
        raise DimensionError("params/grads/velocity length mismatch")
    new_params, new_velocity = [], []
    for p, g, v in zip(params, grads, velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise DimensionError("params/grads/velocity shape mismatch")
        nv = config.momentum * v - config.learning_rate * g
        new_velocity.append(nv)
        new_params.append(p + nv)
    return new_params, new_velocity


def zero_velocity(params):
    return [np.zeros_like(p) for p in params]


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    """Yield shuffled index arrays covering range(n) once."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def gradient_check(params, loss_fn, grad_fn, h: float = 1e-4,
                   num_coords: int = 100, seed: int = 0) -> float:
    """Max relative error between analytic gradients and central differences.

    params: list of float64 arrays mutated in place during probing.
    loss_fn(): scalar loss at the current params.
    grad_fn(): list of gradient arrays matching params.
    """
    if h <= 0:
        raise ParameterError("h must be > 0")
    rng = np.random.default_rng(seed)
    analytic = grad_fn()
    sizes = [p.size for p in params]
    total = sum(sizes)
    coords = rng.choice(total, size=min(num_coords, total), replace=False)
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    for c in coords:
        k = int(np.searchsorted(offsets, c, side="right") - 1)
        idx = np.unravel_index(c - offsets[k], params[k].shape)
        orig = params[k][idx]
        params[k][idx] = orig + h
        lp = loss_fn()
        params[k][idx] = orig - h
        lm = loss_fn()
        params[k][idx] = orig
        numeric = (lp - lm) / (2.0 * h)
        a = float(analytic[k][idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
