"""Per-task undercomplete autoencoder gate.

One fully connected ReLU encoder, one fully connected sigmoid decoder,
trained with elementwise cross-entropy on preprocessed inputs. At test time
the gate scores a sample by the dimension-normalized squared Euclidean
distance between the preprocessed input and its reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    InsufficientDataError,
    ParameterError,
    StatsRegimeError,
    UndercompleteViolation,
)
from .nn_core import (
    Activation,
    DenseLayer,
    SgdConfig,
    as_matrix,
    cross_entropy_loss,
    forward,
    init_layer,
    minibatches,
    sgd_step,
    squared_error,
    squared_error_rows,
    zero_velocity,
)
from .preprocess import ReferenceStats, preprocess


@dataclass
class AutoencoderGate:
    encoder: DenseLayer  # (code, d), ReLU
    decoder: DenseLayer  # (d, code), Sigmoid
    stats_source_id: str
    task_name: str
    train_loss_history: list = field(default_factory=list)

    def __post_init__(self):
        if self.encoder.out_dim >= self.encoder.in_dim:
            raise UndercompleteViolation(
                f"code size {self.encoder.out_dim} must be < input dim {self.encoder.in_dim}"
            )
        if self.decoder.out_dim != self.encoder.in_dim or self.decoder.in_dim != self.encoder.out_dim:
            raise DimensionError("encoder/decoder dimensions inconsistent")

    @property
    def input_dim(self) -> int:
        return self.encoder.in_dim

    def reconstruct(self, preprocessed: np.ndarray) -> np.ndarray:
        return forward(self.decoder, forward(self.encoder, preprocessed))


@dataclass
class GateTrainReport:
    epochs_run: int
    final_train_loss: float
    final_val_error: float


def train_val_split(n: int, seed: int, val_fraction: float = 0.1):
    """Seeded 90/10 index split, shared by gate training and relatedness."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = max(1, int(round(n * val_fraction)))
    return order[n_val:], order[:n_val]


def _ae_loss_and_grads(encoder: DenseLayer, decoder: DenseLayer, x: np.ndarray,
                       loss: str = "cross_entropy"):
    """Loss and hand-derived gradients for the two supported configurations.

    "cross_entropy": ReLU encoder + sigmoid decoder (the production gate).
    "squared": identity encoder + identity decoder (linear test variant).
    """
    n, d = x.shape
    z1 = x @ encoder.w.T + encoder.b
    a1 = np.maximum(z1, 0) if encoder.activation == Activation.RELU else z1
    z2 = a1 @ decoder.w.T + decoder.b
    if loss == "cross_entropy":
        out = 1.0 / (1.0 + np.exp(-z2))
        value = cross_entropy_loss(x, out)
        dz2 = (out - x) / (n * d)
    elif loss == "squared":
        out = z2
        value = squared_error(x, out)
        dz2 = 2.0 * (out - x) / (n * d)
    else:
        raise ParameterError(f"unknown loss {loss!r}")
    dwd = dz2.T @ a1
    dbd = dz2.sum(axis=0)
    da1 = dz2 @ decoder.w
    dz1 = da1 * (z1 > 0) if encoder.activation == Activation.RELU else da1
    dwe = dz1.T @ x
    dbe = dz1.sum(axis=0)
    return value, [dwe, dbe, dwd, dbd]


def _train_autoencoder(x: np.ndarray, code_size: int, cfg: SgdConfig,
                       encoder_act: Activation, decoder_act: Activation, loss: str):
    d = x.shape[1]
    rng = np.random.default_rng(cfg.seed)
    encoder = init_layer(code_size, d, encoder_act, rng)
    decoder = init_layer(d, code_size, decoder_act, rng)
    params = [encoder.w, encoder.b, decoder.w, decoder.b]
    velocity = zero_velocity(params)
    history = []
    for _ in range(cfg.epochs):
        for idx in minibatches(x.shape[0], cfg.batch_size, rng):
            _, grads = _ae_loss_and_grads(encoder, decoder, x[idx], loss)
            params, velocity = sgd_step(params, grads, cfg, velocity)
            encoder.w, encoder.b, decoder.w, decoder.b = params
        epoch_loss, _ = _ae_loss_and_grads(encoder, decoder, x, loss)
        history.append(float(epoch_loss))
    return encoder, decoder, history


def train_gate(features, stats: ReferenceStats, code_size: int = 100,
               cfg: SgdConfig | None = None, task_name: str = ""):
    """Train one gate on its own task features; returns (gate, report)."""
    raw = as_matrix(features)
    n, d = raw.shape
    if n < 10:
        raise InsufficientDataError(f"need at least 10 samples, got {n}")
    if code_size >= d:
        raise UndercompleteViolation(f"code size {code_size} must be < {d}")
    cfg = cfg or SgdConfig()
    x = preprocess(raw, stats)
    train_idx, val_idx = train_val_split(n, cfg.seed)
    x_train, x_val = x[train_idx], x[val_idx]

    encoder, decoder, history = _train_autoencoder(
        x_train, code_size, cfg, Activation.RELU, Activation.SIGMOID, "cross_entropy")
    gate = AutoencoderGate(encoder, decoder, stats.source_id, task_name, history)
    report = GateTrainReport(
        epochs_run=cfg.epochs,
        final_train_loss=history[-1],
        final_val_error=squared_error(x_val, gate.reconstruct(x_val)),
    )
    return gate, report


def _check_regime(gate: AutoencoderGate, stats: ReferenceStats) -> None:
    if stats.source_id != gate.stats_source_id:
        raise StatsRegimeError(
            f"gate was trained under stats {gate.stats_source_id!r}, got {stats.source_id!r}"
        )


def reconstruction_errors(gate: AutoencoderGate, x, stats: ReferenceStats) -> np.ndarray:
    """Per-sample reconstruction error er_i for each row of x."""
    _check_regime(gate, stats)
    p = preprocess(x, stats)
    if p.shape[1] != gate.input_dim:
        raise DimensionError(f"sample has {p.shape[1]} dims, gate expects {gate.input_dim}")
    return squared_error_rows(p, gate.reconstruct(p))


def reconstruction_error(gate: AutoencoderGate, x, stats: ReferenceStats) -> float:
    """Mean reconstruction error over the rows of x (a single row gives er_i)."""
    return float(np.mean(reconstruction_errors(gate, x, stats)))


def pca_reference_error(features, k: int) -> float:
    """Mean dimension-normalized squared error of the optimal rank-k PCA projection.

    Oracle for the linear-autoencoder property: computed on the matrix as
    given, centered, via SVD.
    """
    x = as_matrix(features, dtype=np.float64)
    n, d = x.shape
    if not 1 <= k < d:
        raise ParameterError(f"need 1 <= k < d, got k={k}, d={d}")
    if n <= k:
        raise ParameterError(f"need n > k, got n={n}, k={k}")
    centered = x - x.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    eigvals = (s ** 2) / n  # population covariance eigenvalues
    return float(np.sum(eigvals[k:]) / d)


def train_linear_autoencoder(features, k: int, cfg: SgdConfig | None = None):
    """Test-only linear configuration: identity activations, squared loss.

    Returns (encoder, decoder, mean reconstruction error on the input).
    """
    x = as_matrix(features)
    if not 1 <= k < x.shape[1]:
        raise ParameterError(f"need 1 <= k < d, got k={k}, d={x.shape[1]}")
    cfg = cfg or SgdConfig()
    encoder, decoder, _ = _train_autoencoder(
        x, k, cfg, Activation.IDENTITY, Activation.IDENTITY, "squared")
    recon = forward(decoder, forward(encoder, x))
    return encoder, decoder, squared_error(x, recon)


def gate_gradient_check(d: int = 12, code: int = 5, n: int = 8,
                        seed: int = 0, h: float = 1e-4, num_coords: int = 100) -> float:
    """Central-difference check of the gate's backprop, run in float64."""
    from .nn_core import gradient_check

    rng = np.random.default_rng(seed)
    encoder = init_layer(code, d, Activation.RELU, rng).astype(np.float64)
    decoder = init_layer(d, code, Activation.SIGMOID, rng).astype(np.float64)
    # break bias symmetry so ReLU kinks sit away from the probe points
    encoder.b += rng.normal(0, 0.1, size=encoder.b.shape)
    x = rng.uniform(0.05, 0.95, size=(n, d))
    params = [encoder.w, encoder.b, decoder.w, decoder.b]
    return gradient_check(
        params,
        loss_fn=lambda: _ae_loss_and_grads(encoder, decoder, x, "cross_entropy")[0],
        grad_fn=lambda: _ae_loss_and_grads(encoder, decoder, x, "cross_entropy")[1],
        h=h, num_coords=num_coords, seed=seed,
    )
