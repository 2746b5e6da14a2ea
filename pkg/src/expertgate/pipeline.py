"""Sequential task learning, routed inference, and the evaluation baselines.

The registry keeps every gate resident but at most one expert in memory;
experts live on disk and are loaded on demand, evicting the previous one.
Learning a task never touches earlier tasks' training data: only the stored
models participate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateTaskError,
    EmptyRegistryError,
    ParameterError,
    StoreCorruptError,
)
from .experts import (
    ExpertModel,
    LabeledDataset,
    fine_tune,
    lwf_train,
    predict,
    train_scratch,
    _expert_loss_and_grads,
)
from .gate import AutoencoderGate, reconstruction_errors, train_gate, train_val_split
from .gating import (
    BASE_PRIOR,
    DEFAULT_ACTIVATION_THRESHOLD,
    DEFAULT_REL_THRESHOLD,
    DEFAULT_TEMPERATURE,
    GateEnsemble,
    RelatednessReport,
    TransferMethod,
    route,
    select_most_related,
)
from .nn_core import Activation, SgdConfig, init_layer
from .preprocess import compute_reference_stats, preprocess
from . import storage


@dataclass
class LearnConfig:
    code_size: int | None = None      # None: min(100, d // 2)
    hidden: int = 128
    rel_threshold: float = DEFAULT_REL_THRESHOLD
    temperature: float = DEFAULT_TEMPERATURE
    lambda_old: float = 1.0
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0

    def gate_cfg(self, task_index: int) -> SgdConfig:
        return SgdConfig(self.learning_rate, 0.9, self.epochs, self.batch_size,
                         self.seed + 101 * task_index + 1)

    def expert_cfg(self, task_index: int) -> SgdConfig:
        return SgdConfig(self.learning_rate, 0.9, self.epochs, self.batch_size,
                         self.seed + 101 * task_index + 2)

    def effective_code_size(self, d: int) -> int:
        if self.code_size is not None:
            return self.code_size
        return min(100, max(1, d // 2))


class ModelRegistry:
    """Gates stay resident; experts are lazily loaded, one at a time."""

    def __init__(self, store_path, temperature: float = DEFAULT_TEMPERATURE):
        self.store_path = Path(store_path)
        self.store_path.mkdir(parents=True, exist_ok=True)
        self.temperature = temperature
        self.stats = None
        self.rows: list = []
        self.gates: list = []
        self._resident = None          # (task_name, ExpertModel) or None
        self.peak_resident = 0
        self.expert_loads = 0

    # ------------------------------------------------------------- state

    @property
    def task_names(self) -> list:
        return [r.task_name for r in self.rows]

    @property
    def resident_count(self) -> int:
        return 0 if self._resident is None else 1

    def __len__(self) -> int:
        return len(self.rows)

    def ensemble(self) -> GateEnsemble:
        return GateEnsemble(list(self.gates), self.stats, self.temperature)

    # ---------------------------------------------------------- residency

    def load_expert(self, task_name: str) -> ExpertModel:
        """Load one expert, evicting any other resident expert first."""
        if self._resident is not None and self._resident[0] == task_name:
            return self._resident[1]
        self._resident = None  # immediate eviction before the new load
        row = next((r for r in self.rows if r.task_name == task_name), None)
        if row is None:
            raise ParameterError(f"unknown task {task_name!r}")
        expert = storage.load_expert(self.store_path / row.expert_file,
                                     origin=row.chosen_prior, method=row.method)
        self._resident = (task_name, expert)
        self.expert_loads += 1
        self.peak_resident = max(self.peak_resident, self.resident_count)
        return expert

    # -------------------------------------------------------- persistence

    def _persist_task(self, task_name: str, gate: AutoencoderGate,
                      expert: ExpertModel, method: TransferMethod,
                      chosen_prior: str, rel) -> None:
        gate_file = f"{task_name}.gate.egw"
        expert_file = f"{task_name}.expert.egw"
        storage.save_gate(gate, self.store_path / gate_file)
        storage.save_expert(expert, self.store_path / expert_file)
        self.rows.append(storage.ManifestRow(task_name, gate_file, expert_file,
                                             method, chosen_prior, rel))
        storage.save_manifest(self.rows, self.store_path / storage.MANIFEST_NAME)


def load_model_store(store_path, temperature: float = DEFAULT_TEMPERATURE) -> ModelRegistry:
    store_path = Path(store_path)
    manifest = store_path / storage.MANIFEST_NAME
    stats_file = store_path / storage.STATS_NAME
    if not manifest.exists() or not stats_file.exists():
        raise StoreCorruptError(f"{store_path}: missing manifest or stats file")
    registry = ModelRegistry(store_path, temperature)
    registry.stats = storage.load_stats(stats_file)
    registry.rows = storage.load_manifest(manifest)
    for row in registry.rows:
        gate_path = store_path / row.gate_file
        expert_path = store_path / row.expert_file
        if not gate_path.exists() or not expert_path.exists():
            raise StoreCorruptError(f"{store_path}: missing files for task {row.task_name!r}")
        registry.gates.append(storage.load_gate(gate_path, row.task_name,
                                                registry.stats.source_id))
    return registry


# ------------------------------------------------------------ learn / infer

@dataclass
class LearnOutcome:
    task_name: str
    relatedness: RelatednessReport
    gate_val_error: float


def learn_task(registry: ModelRegistry, data: LabeledDataset,
               config: LearnConfig | None = None) -> LearnOutcome:
    """Train gate + expert for one arriving task and persist them."""
    config = config or LearnConfig()
    if data.task_name in registry.task_names:
        raise DuplicateTaskError(f"task {data.task_name!r} already learned")
    task_index = len(registry)
    if registry.stats is None:
        registry.stats = compute_reference_stats(
            data.features, source_id=f"ref:{data.task_name}")
        storage.save_stats(registry.stats, registry.store_path / storage.STATS_NAME)

    gate_cfg = config.gate_cfg(task_index)
    code_size = config.effective_code_size(data.dim)
    gate, gate_report = train_gate(data.features, registry.stats, code_size,
                                   gate_cfg, data.task_name)
    _, val_idx = train_val_split(data.n, gate_cfg.seed)
    rel_report = select_most_related(registry.ensemble(), gate,
                                     data.features[val_idx], config.rel_threshold)

    expert_cfg = config.expert_cfg(task_index)
    if rel_report.chosen_prior == BASE_PRIOR:
        expert = train_scratch(data, config.hidden, expert_cfg)
        method = TransferMethod.FINE_TUNE  # base-model fallback per the algorithm
        rel = None
    else:
        prior = registry.load_expert(rel_report.chosen_prior)
        if rel_report.method == TransferMethod.LWF:
            expert = lwf_train(prior, data, expert_cfg, config.temperature,
                               config.lambda_old, origin=rel_report.chosen_prior)
        else:
            expert = fine_tune(prior, data, expert_cfg, origin=rel_report.chosen_prior)
        method = rel_report.method
        rel = max(e.rel for e in rel_report.entries)

    registry.gates.append(gate)
    registry._persist_task(data.task_name, gate, expert, method,
                           rel_report.chosen_prior, rel)
    return LearnOutcome(data.task_name, rel_report, gate_report.final_val_error)


@dataclass
class InferResult:
    task_name: str
    prediction: int
    probabilities: np.ndarray
    routing: "RoutingDecision"
    activated_predictions: list  # [(task_name, class id)] in multi mode


def infer(registry: ModelRegistry, x,
          activation_threshold: float = DEFAULT_ACTIVATION_THRESHOLD,
          multi: bool = False) -> InferResult:
    """Route one sample, load only the chosen expert(s) and predict."""
    if len(registry) == 0:
        raise EmptyRegistryError("no tasks learned yet")
    decision = route(registry.ensemble(), x, activation_threshold)
    names = registry.task_names
    selected_name = names[decision.selected]

    activated_predictions = []
    if multi:
        for i in decision.activated:  # sequential: one resident expert at a time
            expert = registry.load_expert(names[i])
            ids, _ = predict(expert, names[i], x)
            activated_predictions.append((names[i], int(ids[0])))

    expert = registry.load_expert(selected_name)
    ids, probs = predict(expert, selected_name, x)
    return InferResult(selected_name, int(ids[0]), probs[0], decision,
                       activated_predictions)


# ----------------------------------------------------------------- splits

def split_dataset(data: LabeledDataset, seed: int = 0):
    """Fixed seeded 80/10/10 train/val/test split."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(data.n)
    n_test = max(1, data.n // 10)
    n_val = max(1, data.n // 10)
    test = data.subset(order[:n_test])
    val = data.subset(order[n_test:n_test + n_val])
    train = data.subset(order[n_test + n_val:])
    return train, val, test


def _selection_matrix(registry: ModelRegistry, features: np.ndarray) -> np.ndarray:
    """Per-sample reconstruction errors (n x k) across all gates."""
    return np.stack([reconstruction_errors(g, features, registry.stats)
                     for g in registry.gates], axis=1)


def routed_accuracy(registry: ModelRegistry, test_sets) -> tuple:
    """Gate-routed accuracy per task plus gate-selection stats.

    Misrouted samples count as errors (their expert has a different label
    space). Experts are evaluated one at a time via the resident slot.
    """
    names = registry.task_names
    k = len(names)
    confusion = np.zeros((k, k), dtype=np.int64)
    per_task_acc = []
    correct_selection = 0
    total = 0
    for true_idx, test in enumerate(test_sets):
        er = _selection_matrix(registry, test.features)
        selected = np.argmin(er, axis=1)
        for s in range(k):
            confusion[true_idx, s] = int(np.sum(selected == s))
        correct_selection += int(np.sum(selected == true_idx))
        total += test.n
        correct = 0
        for s in np.unique(selected):
            mask = selected == s
            if names[s] != test.task_name:
                continue  # routed to the wrong expert: counted incorrect
            expert = registry.load_expert(names[s])
            ids, _ = predict(expert, names[s], test.features[mask])
            correct += int(np.sum(ids == test.labels[mask]))
        per_task_acc.append(correct / test.n)
    return per_task_acc, correct_selection / total, confusion


# ------------------------------------------------------------- baselines

def _model_accuracy(model: ExpertModel, task: str, test: LabeledDataset) -> float:
    ids, _ = predict(model, task, test.features)
    return float(np.mean(ids == test.labels))


def train_joint(datasets, hidden: int, cfg: SgdConfig) -> ExpertModel:
    """Shared body + per-task heads, uniform task sampling per batch."""
    if len(datasets) < 2:
        raise ParameterError("joint training needs >= 2 tasks")
    d = datasets[0].dim
    rng = np.random.default_rng(cfg.seed)
    body = init_layer(hidden, d, Activation.RELU, rng)
    heads = {t.task_name: init_layer(t.class_count, hidden, Activation.IDENTITY, rng)
             for t in datasets}
    onehots = {t.task_name: t.onehot() for t in datasets}
    layers = {"body": body, **heads}
    velocity = {name: (np.zeros_like(l.w), np.zeros_like(l.b))
                for name, l in layers.items()}

    def update(name, gw, gb):
        layer = layers[name]
        vw, vb = velocity[name]
        vw = cfg.momentum * vw - cfg.learning_rate * gw
        vb = cfg.momentum * vb - cfg.learning_rate * gb
        layer.w, layer.b = layer.w + vw, layer.b + vb
        velocity[name] = (vw, vb)

    steps_per_epoch = max(t.n for t in datasets) // cfg.batch_size + 1
    for _ in range(cfg.epochs):
        for _ in range(steps_per_epoch):
            t = datasets[rng.integers(len(datasets))]
            idx = rng.integers(0, t.n, size=min(cfg.batch_size, t.n))
            _, body_g, head_g = _expert_loss_and_grads(
                body, heads, t.features[idx], t.task_name, onehots[t.task_name][idx])
            update("body", *body_g)
            update(t.task_name, *head_g[t.task_name])
    return ExpertModel(body, heads, origin="", method=TransferMethod.SCRATCH)


def most_confident_accuracy(experts, test_sets) -> list:
    """Pick the expert with the highest own-head softmax score per sample."""
    names = list(experts.keys())
    per_task = []
    for test in test_sets:
        best_conf = np.full(test.n, -np.inf)
        best_pred = np.zeros(test.n, dtype=np.int64)
        best_task = np.full(test.n, -1)
        for j, name in enumerate(names):
            ids, probs = predict(experts[name], name, test.features)
            conf = probs.max(axis=1)
            better = conf > best_conf
            best_conf[better] = conf[better]
            best_pred[better] = ids[better]
            best_task[better] = j
        true_j = names.index(test.task_name)
        correct = (best_task == true_j) & (best_pred == test.labels)
        per_task.append(float(np.mean(correct)))
    return per_task


@dataclass
class DiscriminativeGateResult:
    classifier: ExpertModel
    selection_accuracy: float
    per_task_accuracy: list
    samples_per_task: int


def train_discriminative_gate(task_datasets, samples_per_task: int,
                              stats=None, hidden: int = 100,
                              cfg: SgdConfig | None = None,
                              split_seed: int = 0) -> DiscriminativeGateResult:
    """Task classifier over the same preprocessed representation as the gates.

    Trained on up to samples_per_task retained training samples per task;
    evaluated on the held-out test splits.
    """
    if len(task_datasets) < 2:
        raise ParameterError("need at least 2 tasks")
    if samples_per_task < 1:
        raise ParameterError("samples_per_task must be >= 1")
    cfg = cfg or SgdConfig(epochs=100)
    splits = [split_dataset(t, split_seed) for t in task_datasets]
    if stats is None:
        stats = compute_reference_stats(splits[0][0].features,
                                        source_id=f"ref:{task_datasets[0].task_name}")
    feats, labels = [], []
    for task_id, (train, _, _) in enumerate(splits):
        take = samples_per_task
        if take > train.n:
            warnings.warn(f"task {train.task_name!r}: only {train.n} samples "
                          f"available, truncating from {samples_per_task}")
            take = train.n
        rng = np.random.default_rng(cfg.seed + task_id)
        idx = rng.permutation(train.n)[:take]
        feats.append(preprocess(train.features[idx], stats))
        labels.append(np.full(take, task_id))
    pooled = LabeledDataset(np.vstack(feats), np.concatenate(labels),
                            len(task_datasets), "task-id")
    classifier = train_scratch(pooled, hidden, cfg)
    per_task, correct, total = [], 0, 0
    for task_id, (_, _, test) in enumerate(splits):
        ids, _ = predict(classifier, "task-id", preprocess(test.features, stats))
        acc = float(np.mean(ids == task_id))
        per_task.append(acc)
        correct += int(np.sum(ids == task_id))
        total += test.n
    return DiscriminativeGateResult(classifier, correct / total, per_task,
                                    samples_per_task)


@dataclass
class SequenceReport:
    task_names: list
    methods: dict                       # method name -> per-task accuracies
    gate_selection_accuracy: float
    gate_confusion: np.ndarray
    discriminative_selection_accuracy: float
    finetune_task0_history: list = field(default_factory=list)
    sweep: dict = field(default_factory=dict)  # samples_per_task -> selection acc

    def average(self, method: str) -> float:
        return float(np.mean(self.methods[method]))


def run_baselines(task_sequence, store_dir, config: LearnConfig | None = None,
                  split_seed: int = 0) -> SequenceReport:
    """Train and evaluate the gated-expert system against the baselines."""
    if len(task_sequence) < 2:
        raise ParameterError("need at least 2 tasks")
    config = config or LearnConfig()
    splits = [split_dataset(t, split_seed) for t in task_sequence]
    trains = [s[0] for s in splits]
    tests = [s[2] for s in splits]
    names = [t.task_name for t in task_sequence]

    # gated experts: sequential arrival, no access to earlier training data
    registry = ModelRegistry(Path(store_dir) / "expertgate", config.temperature)
    for train in trains:
        learn_task(registry, train, config)
    eg_acc, selection_acc, confusion = routed_accuracy(registry, tests)

    # dedicated experts with oracle routing (upper bound for gating)
    experts = {name: storage.load_expert(registry.store_path / row.expert_file,
                                         row.chosen_prior, row.method)
               for name, row in zip(names, registry.rows)}
    oracle_acc = [_model_accuracy(experts[n], n, t) for n, t in zip(names, tests)]

    # single model fine-tuned sequentially
    single_ft = train_scratch(trains[0], config.hidden, config.expert_cfg(0))
    ft_task0 = [_model_accuracy(single_ft, names[0], tests[0])]
    for i, train in enumerate(trains[1:], start=1):
        single_ft = fine_tune(single_ft, train, config.expert_cfg(i))
        ft_task0.append(_model_accuracy(single_ft, names[0], tests[0]))
    single_ft_acc = [_model_accuracy(single_ft, n, t) for n, t in zip(names, tests)]

    # single model trained sequentially with distillation soft targets
    single_lwf = train_scratch(trains[0], config.hidden, config.expert_cfg(0))
    for i, train in enumerate(trains[1:], start=1):
        single_lwf = lwf_train(single_lwf, train, config.expert_cfg(i),
                               config.temperature, config.lambda_old)
    single_lwf_acc = [_model_accuracy(single_lwf, n, t) for n, t in zip(names, tests)]

    joint = train_joint(trains, config.hidden,
                        SgdConfig(config.learning_rate, 0.9, config.epochs,
                                  config.batch_size, config.seed + 7))
    joint_acc = [_model_accuracy(joint, n, t) for n, t in zip(names, tests)]

    most_conf_acc = most_confident_accuracy(experts, tests)

    disc = train_discriminative_gate(
        task_sequence, max(t.n for t in trains), registry.stats,
        cfg=SgdConfig(config.learning_rate, 0.9, min(config.epochs, 100),
                      config.batch_size, config.seed + 9),
        split_seed=split_seed)
    disc_acc = []
    for task_id, (n, t) in enumerate(zip(names, tests)):
        ids, _ = predict(disc.classifier, "task-id", preprocess(t.features, registry.stats))
        mask = ids == task_id
        pred, _ = predict(experts[n], n, t.features)
        disc_acc.append(float(np.mean(mask & (pred == t.labels))))

    return SequenceReport(
        task_names=names,
        methods={
            "ExpertGate": eg_acc,
            "SingleFineTuned": single_ft_acc,
            "SingleLwF": single_lwf_acc,
            "MultipleOracle": oracle_acc,
            "JointTraining": joint_acc,
            "MostConfident": most_conf_acc,
            "DiscriminativeGate": disc_acc,
        },
        gate_selection_accuracy=selection_acc,
        gate_confusion=confusion,
        discriminative_selection_accuracy=disc.selection_accuracy,
        finetune_task0_history=ft_task0,
    )


def stored_sample_sweep(task_sequence, stats, sizes=(10, 100),
                        cfg: SgdConfig | None = None, split_seed: int = 0) -> dict:
    """Task-selection accuracy of the discriminative gate vs retained samples."""
    out = {}
    for size in sizes:
        res = train_discriminative_gate(task_sequence, size, stats,
                                        cfg=cfg, split_seed=split_seed)
        out[size] = res.selection_accuracy
    return out
