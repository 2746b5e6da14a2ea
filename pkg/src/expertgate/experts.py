"""Per-task expert classifiers: one-hidden-layer MLPs with named task heads.

An expert can be trained from scratch, fine-tuned from a prior expert
(body reused, old heads kept frozen), or trained with distillation soft
targets so the old heads keep reproducing the prior model's softened
outputs on new-task data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, UnknownHeadError
from .gating import TransferMethod
from .nn_core import (
    Activation,
    DenseLayer,
    SgdConfig,
    as_matrix,
    forward,
    init_layer,
    minibatches,
    sgd_step,
    softmax,
    softmax_cross_entropy,
    zero_velocity,
    EPS_PROB,
)

DEFAULT_HIDDEN = 128
DEFAULT_DISTILL_TEMPERATURE = 2.0
DEFAULT_LAMBDA_OLD = 1.0


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    task_name: str

    def __post_init__(self):
        self.features = as_matrix(self.features)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.labels.shape[0] != self.features.shape[0]:
            raise DimensionError("label count != feature row count")
        if self.class_count < 1:
            raise ParameterError("class_count must be >= 1")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ParameterError("labels out of range [0, class_count)")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def onehot(self) -> np.ndarray:
        out = np.zeros((self.n, self.class_count), dtype=np.float32)
        out[np.arange(self.n), self.labels] = 1.0
        return out

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx],
                              self.class_count, self.task_name)


@dataclass
class ExpertModel:
    body: DenseLayer            # (hidden, d), ReLU
    heads: dict                 # task_name -> DenseLayer (classes, hidden), Identity
    origin: str                 # prior model this one was initialized from
    method: TransferMethod

    def __post_init__(self):
        for name, head in self.heads.items():
            if head.in_dim != self.body.out_dim:
                raise DimensionError(f"head {name!r} input dim != body output dim")

    @property
    def input_dim(self) -> int:
        return self.body.in_dim

    def copy(self) -> "ExpertModel":
        return ExpertModel(self.body.copy(),
                           {k: v.copy() for k, v in self.heads.items()},
                           self.origin, self.method)

    def logits(self, task: str, x: np.ndarray) -> np.ndarray:
        if task not in self.heads:
            raise UnknownHeadError(f"no head for task {task!r}")
        return forward(self.heads[task], forward(self.body, x))


def _expert_loss_and_grads(body, heads, x, new_task, onehot,
                           soft_targets=None, temperature=DEFAULT_DISTILL_TEMPERATURE,
                           lambda_old=DEFAULT_LAMBDA_OLD):
    """Combined loss (new-task softmax CE + distillation on old heads) and grads.

    soft_targets: {head_name: softened target distribution on x}, or None to
    train on the new-task loss only. Heads absent from both the new task and
    soft_targets get zero gradients.
    """
    n = x.shape[0]
    z1 = x @ body.w.T + body.b
    a1 = np.maximum(z1, 0)
    total = 0.0
    da1 = np.zeros_like(a1)
    head_grads = {}
    for name, head in heads.items():
        logits = a1 @ head.w.T + head.b
        if name == new_task:
            p = softmax(logits)
            total += float(-np.mean(np.sum(onehot * np.log(np.clip(p, EPS_PROB, 1.0)), axis=1)))
            dlogits = (p - onehot) / n
        elif soft_targets is not None and name in soft_targets:
            q = soft_targets[name]
            p = softmax(logits / temperature)
            total += lambda_old * float(
                -np.mean(np.sum(q * np.log(np.clip(p, EPS_PROB, 1.0)), axis=1)))
            dlogits = lambda_old * (p - q) / (n * temperature)
        else:
            head_grads[name] = (np.zeros_like(head.w), np.zeros_like(head.b))
            continue
        head_grads[name] = (dlogits.T @ a1, dlogits.sum(axis=0))
        da1 += dlogits @ head.w
    dz1 = da1 * (z1 > 0)
    body_grads = (dz1.T @ x, dz1.sum(axis=0))
    return total, body_grads, head_grads


def _train(body, heads, data: LabeledDataset, cfg: SgdConfig, trainable,
           soft_targets=None, temperature=DEFAULT_DISTILL_TEMPERATURE,
           lambda_old=DEFAULT_LAMBDA_OLD):
    """Minibatch momentum-SGD over the layers named in `trainable` (in place)."""
    rng = np.random.default_rng(cfg.seed + 1)  # offset: init draws used cfg.seed
    x = data.features
    y = data.onehot()
    layer_of = {"body": body, **heads}
    params = []
    for name in trainable:
        layer = layer_of[name]
        params.extend([layer.w, layer.b])
    velocity = zero_velocity(params)
    for _ in range(cfg.epochs):
        for idx in minibatches(data.n, cfg.batch_size, rng):
            st = None
            if soft_targets is not None:
                st = {k: v[idx] for k, v in soft_targets.items()}
            _, body_g, head_g = _expert_loss_and_grads(
                body, heads, x[idx], data.task_name, y[idx],
                soft_targets=st, temperature=temperature, lambda_old=lambda_old)
            grads = []
            for name in trainable:
                gw, gb = body_g if name == "body" else head_g[name]
                grads.extend([gw, gb])
            params, velocity = sgd_step(params, grads, cfg, velocity)
            for j, name in enumerate(trainable):
                layer = layer_of[name]
                layer.w, layer.b = params[2 * j], params[2 * j + 1]


def train_scratch(data: LabeledDataset, hidden: int = DEFAULT_HIDDEN,
                  cfg: SgdConfig | None = None) -> ExpertModel:
    """Fresh body plus a single head for the dataset's task."""
    if data.class_count < 2:
        raise ParameterError("need at least 2 classes")
    if data.n < 10:
        raise ParameterError("need at least 10 samples")
    cfg = cfg or SgdConfig()
    rng = np.random.default_rng(cfg.seed)
    body = init_layer(hidden, data.dim, Activation.RELU, rng)
    heads = {data.task_name: init_layer(data.class_count, hidden, Activation.IDENTITY, rng)}
    _train(body, heads, data, cfg, trainable=["body", data.task_name])
    return ExpertModel(body, heads, origin="", method=TransferMethod.SCRATCH)


def fine_tune(prior: ExpertModel, data: LabeledDataset,
              cfg: SgdConfig | None = None, origin: str = "") -> ExpertModel:
    """Body warm-started from the prior, new random head, new-task loss only.

    Old heads are carried over untouched; the prior itself is never mutated.
    """
    if prior.input_dim != data.dim:
        raise DimensionError(f"prior expects {prior.input_dim} dims, data has {data.dim}")
    cfg = cfg or SgdConfig()
    rng = np.random.default_rng(cfg.seed)
    model = prior.copy()
    model.heads[data.task_name] = init_layer(data.class_count, model.body.out_dim,
                                             Activation.IDENTITY, rng)
    _train(model.body, model.heads, data, cfg, trainable=["body", data.task_name])
    model.origin = origin
    model.method = TransferMethod.FINE_TUNE
    return model


def lwf_train(prior: ExpertModel, data: LabeledDataset, cfg: SgdConfig | None = None,
              temperature: float = DEFAULT_DISTILL_TEMPERATURE,
              lambda_old: float = DEFAULT_LAMBDA_OLD, origin: str = "") -> ExpertModel:
    """Learning without forgetting: new head trained alongside distillation.

    The prior's softened outputs on the new-task features are recorded once
    and held fixed; all parameters (body, old heads, new head) are updated.
    """
    if prior.input_dim != data.dim:
        raise DimensionError(f"prior expects {prior.input_dim} dims, data has {data.dim}")
    if not prior.heads:
        raise ParameterError("prior has no heads to distill from")
    if temperature <= 0:
        raise ParameterError("temperature must be positive")
    cfg = cfg or SgdConfig()
    soft_targets = {
        name: softmax(prior.logits(name, data.features) / temperature)
        for name in prior.heads
    }
    rng = np.random.default_rng(cfg.seed)
    model = prior.copy()
    model.heads[data.task_name] = init_layer(data.class_count, model.body.out_dim,
                                             Activation.IDENTITY, rng)
    _train(model.body, model.heads, data, cfg,
           trainable=["body", *model.heads.keys()],
           soft_targets=soft_targets, temperature=temperature, lambda_old=lambda_old)
    model.origin = origin
    model.method = TransferMethod.LWF
    return model


def predict(model: ExpertModel, task: str, x) -> tuple:
    """(class ids, class probabilities) from the named task head."""
    a = as_matrix(x)
    probs = softmax(model.logits(task, a))
    return np.argmax(probs, axis=1), probs


def expert_gradient_check(d: int = 10, hidden: int = 7, classes: int = 3,
                          n: int = 8, seed: int = 0, h: float = 1e-4,
                          num_coords: int = 100, with_lwf: bool = True) -> float:
    """Central-difference check of the combined expert loss, run in float64."""
    from .nn_core import gradient_check

    rng = np.random.default_rng(seed)
    body = init_layer(hidden, d, Activation.RELU, rng).astype(np.float64)
    body.b += rng.normal(0, 0.1, size=body.b.shape)
    heads = {
        "new": init_layer(classes, hidden, Activation.IDENTITY, rng).astype(np.float64),
    }
    soft = None
    if with_lwf:
        heads["old"] = init_layer(classes, hidden, Activation.IDENTITY, rng).astype(np.float64)
        soft = {"old": softmax(rng.normal(size=(n, classes)) / 2.0)}
    x = rng.normal(size=(n, d))
    labels = rng.integers(0, classes, size=n)
    onehot = np.zeros((n, classes))
    onehot[np.arange(n), labels] = 1.0

    names = ["new"] + (["old"] if with_lwf else [])
    params = [body.w, body.b]
    for name in names:
        params.extend([heads[name].w, heads[name].b])

    def run():
        loss, body_g, head_g = _expert_loss_and_grads(
            body, heads, x, "new", onehot, soft_targets=soft)
        grads = list(body_g)
        for name in names:
            grads.extend(head_g[name])
        return loss, grads

    return gradient_check(params, loss_fn=lambda: run()[0], grad_fn=lambda: run()[1],
                          h=h, num_coords=num_coords, seed=seed)
