"""Routing over gate reconstruction errors and task-relatedness decisions.

Routing: p_i = exp(-er_i / t) / sum_j exp(-er_j / t), temperature t = 2 by
default; the selected expert is the argmin of er (= argmax of p).
Relatedness: Rel = 1 - (Er_a - Er_k) / Er_k, with the transfer method chosen
by thresholding the best relatedness at 0.85.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    DegenerateErrorBase,
    EmptyEnsembleError,
    ParameterError,
    StatsRegimeError,
)
from .gate import AutoencoderGate, reconstruction_error, reconstruction_errors
from .preprocess import ReferenceStats

DEFAULT_TEMPERATURE = 2.0
DEFAULT_ACTIVATION_THRESHOLD = 0.1
DEFAULT_REL_THRESHOLD = 0.85
EPS_ERROR_BASE = 1e-12

# sentinel prior when no gates exist yet (the designated base model)
BASE_PRIOR = "<base>"


class TransferMethod(str, Enum):
    SCRATCH = "Scratch"
    FINE_TUNE = "FineTune"
    LWF = "LwF"


@dataclass
class GateEnsemble:
    gates: list
    stats: ReferenceStats
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        if self.temperature <= 0:
            raise ParameterError("temperature must be positive")
        names = [g.task_name for g in self.gates]
        if len(set(names)) != len(names):
            raise ParameterError(f"duplicate gate task names: {names}")
        for g in self.gates:
            if g.stats_source_id != self.stats.source_id:
                raise StatsRegimeError(
                    f"gate {g.task_name!r} uses stats {g.stats_source_id!r}, "
                    f"ensemble uses {self.stats.source_id!r}"
                )

    def __len__(self) -> int:
        return len(self.gates)

    @property
    def task_names(self) -> list:
        return [g.task_name for g in self.gates]


@dataclass
class RoutingDecision:
    errors: np.ndarray        # raw er_i per gate
    probabilities: np.ndarray  # softmax(-er/t)
    selected: int              # argmin er
    activated: tuple           # indices with p_i >= threshold, ascending


@dataclass
class RelatednessEntry:
    prior_task: str
    er_new: float   # Er_k: new gate on its own validation data
    er_prior: float  # Er_a: prior gate on the same data
    rel: float


@dataclass
class RelatednessReport:
    new_task: str
    entries: list
    chosen_prior: str
    method: TransferMethod
    rel_threshold: float = DEFAULT_REL_THRESHOLD


def gate_probabilities(er, temperature: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    """Softmax over negated errors, max-subtracted for stability."""
    er = np.asarray(er, dtype=np.float64).reshape(-1)
    if er.size == 0:
        raise EmptyEnsembleError("no reconstruction errors to route over")
    if temperature <= 0:
        raise ParameterError("temperature must be positive")
    if not np.all(np.isfinite(er)):
        raise ParameterError("reconstruction errors must be finite")
    z = -er / temperature
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def route(ensemble: GateEnsemble, x,
          activation_threshold: float = DEFAULT_ACTIVATION_THRESHOLD) -> RoutingDecision:
    """Score one sample with every gate and pick the most confident expert."""
    if len(ensemble) == 0:
        raise EmptyEnsembleError("cannot route with an empty ensemble")
    er = np.array([reconstruction_error(g, x, ensemble.stats) for g in ensemble.gates])
    p = gate_probabilities(er, ensemble.temperature)
    selected = int(np.argmin(er))
    activated = tuple(int(i) for i in np.flatnonzero(p >= activation_threshold))
    return RoutingDecision(er, p, selected, activated)


def task_relatedness(er_new: float, er_prior: float) -> float:
    """Rel = 1 - (Er_a - Er_k) / Er_k; unclamped, asymmetric."""
    if not (np.isfinite(er_new) and np.isfinite(er_prior)):
        raise ParameterError("reconstruction errors must be finite")
    if er_new <= EPS_ERROR_BASE:
        raise DegenerateErrorBase(
            "the new task's own reconstruction error is ~0; relatedness undefined"
        )
    return float(1.0 - (er_prior - er_new) / er_new)


def select_most_related(ensemble: GateEnsemble, new_gate: AutoencoderGate,
                        val_features,
                        rel_threshold: float = DEFAULT_REL_THRESHOLD) -> RelatednessReport:
    """Rank prior gates by relatedness on the new task's validation data.

    With no priors, falls back to the designated base model with fine-tuning.
    """
    if len(ensemble) == 0:
        return RelatednessReport(new_gate.task_name, [], BASE_PRIOR,
                                 TransferMethod.FINE_TUNE, rel_threshold)
    er_new = float(np.mean(reconstruction_errors(new_gate, val_features, ensemble.stats)))
    entries = []
    for g in ensemble.gates:
        er_prior = float(np.mean(reconstruction_errors(g, val_features, ensemble.stats)))
        entries.append(RelatednessEntry(g.task_name, er_new, er_prior,
                                        task_relatedness(er_new, er_prior)))
    rels = np.array([e.rel for e in entries])
    best = int(np.argmax(rels))  # ties break to lowest index (arrival order)
    method = TransferMethod.LWF if rels[best] > rel_threshold else TransferMethod.FINE_TUNE
    return RelatednessReport(new_gate.task_name, entries,
                             entries[best].prior_task, method, rel_threshold)


def relatedness_asymmetry_probe(gate_a: AutoencoderGate, gate_b: AutoencoderGate,
                                val_a, val_b, stats: ReferenceStats):
    """Rel in both directions; diagnostic for the asymmetry of the measure.

    rel_ab treats A as the new task (B's gate scored on A's validation data),
    rel_ba the reverse.
    """
    er_aa = float(np.mean(reconstruction_errors(gate_a, val_a, stats)))
    er_ba = float(np.mean(reconstruction_errors(gate_b, val_a, stats)))
    er_bb = float(np.mean(reconstruction_errors(gate_b, val_b, stats)))
    er_ab = float(np.mean(reconstruction_errors(gate_a, val_b, stats)))
    return task_relatedness(er_aa, er_ba), task_relatedness(er_bb, er_ab)
