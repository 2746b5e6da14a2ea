"""Lifelong learning with autoencoder-gated expert models."""

from .errors import (
    DegenerateErrorBase,
    DimensionError,
    DuplicateTaskError,
    EmptyEnsembleError,
    EmptyRegistryError,
    ExpertGateError,
    FormatError,
    InsufficientDataError,
    ParameterError,
    StatsRegimeError,
    StoreCorruptError,
    UndercompleteViolation,
    UnknownHeadError,
)
from .nn_core import Activation, DenseLayer, SgdConfig
from .preprocess import ReferenceStats, compute_reference_stats, preprocess
from .gate import (
    AutoencoderGate,
    GateTrainReport,
    pca_reference_error,
    reconstruction_error,
    reconstruction_errors,
    train_gate,
)
from .gating import (
    GateEnsemble,
    RelatednessReport,
    RoutingDecision,
    TransferMethod,
    gate_probabilities,
    relatedness_asymmetry_probe,
    route,
    select_most_related,
    task_relatedness,
)
from .experts import (
    ExpertModel,
    LabeledDataset,
    fine_tune,
    lwf_train,
    predict,
    train_scratch,
)
from .pipeline import (
    LearnConfig,
    ModelRegistry,
    SequenceReport,
    infer,
    learn_task,
    load_model_store,
    run_baselines,
    train_discriminative_gate,
)
from .synth import SyntheticTaskSpec, generate_synthetic_task, make_task_suite

__version__ = "0.1.0"
