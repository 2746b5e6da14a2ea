"""Synthetic task generators: Gaussian classes on low-dimensional manifolds.

Desk-scale stand-ins for real feature datasets. Each task lives on an
affine subspace of the ambient space (or is a plain Gaussian-cluster mix);
the nested kind reuses a shared basis so one task's manifold is a subspace
of another's.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import FormatError, ParameterError
from .experts import LabeledDataset

KINDS = ("affine-subspace", "gaussian-clusters", "nested")
CLASS_CENTER_SCALE = 3.0  # spread of class centers in intrinsic coordinates


@dataclass(frozen=True)
class SyntheticTaskSpec:
    name: str
    kind: str
    intrinsic_dim: int
    ambient_dim: int
    classes: int
    samples: int
    noise: float
    seed: int
    basis_seed: int | None = None  # shared between nested specs

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown manifold kind {self.kind!r}")
        if self.intrinsic_dim >= self.ambient_dim:
            raise ParameterError("intrinsic dim must be < ambient dim")
        if self.intrinsic_dim < 1 or self.classes < 1 or self.samples < 1:
            raise ParameterError("intrinsic_dim, classes, samples must be >= 1")
        if self.noise < 0:
            raise ParameterError("noise must be >= 0")


def spec_from_json(path) -> SyntheticTaskSpec:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        return SyntheticTaskSpec(**raw)
    except (json.JSONDecodeError, TypeError, KeyError) as exc:
        raise FormatError(f"bad task spec {path}: {exc}") from exc


def spec_to_json(spec: SyntheticTaskSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(asdict(spec), f, indent=2)
        f.write("\n")


def _orthonormal_basis(d: int, q: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(d, q))
    qmat, _ = np.linalg.qr(a)
    return qmat[:, :q]


def generate_synthetic_task(spec: SyntheticTaskSpec) -> LabeledDataset:
    """Deterministic dataset for the spec; same spec gives identical bytes."""
    rng = np.random.default_rng(spec.seed)
    n, d, q, c = spec.samples, spec.ambient_dim, spec.intrinsic_dim, spec.classes
    labels = rng.integers(0, c, size=n)

    if spec.kind == "gaussian-clusters":
        centers = rng.normal(0, CLASS_CENTER_SCALE, size=(c, d))
        x = centers[labels] + spec.noise * rng.normal(size=(n, d))
        return LabeledDataset(x.astype(np.float32), labels, c, spec.name)

    if spec.kind == "nested":
        basis_rng = np.random.default_rng(
            spec.seed if spec.basis_seed is None else spec.basis_seed)
        # shared full basis; this task spans its first q directions; small
        # class centers with a wide within-class spread so the data blankets
        # the subspace (the containment is about manifolds, not blob sites)
        basis = _orthonormal_basis(d, d - 1, basis_rng)[:, :q]
        offset = np.zeros(d)
        centers = rng.normal(0, 1.0, size=(c, q))
        coords = centers[labels] + 2.0 * rng.normal(size=(n, q))
    else:  # affine-subspace
        basis = _orthonormal_basis(d, q, rng)
        offset = rng.normal(0, 1.0, size=d)
        centers = rng.normal(0, CLASS_CENTER_SCALE, size=(c, q))
        coords = centers[labels] + rng.normal(size=(n, q))
    x = offset + coords @ basis.T + spec.noise * rng.normal(size=(n, d))
    return LabeledDataset(x.astype(np.float32), labels, c, spec.name)


def make_task_suite(num_tasks: int, ambient_dim: int = 64, intrinsic_dim: int = 6,
                    classes: int = 4, samples: int = 2500, noise: float = 0.25,
                    seed: int = 0, center_scale: float = CLASS_CENTER_SCALE) -> list:
    """Tasks on mutually orthogonal subspaces of one shared rotation.

    Task i spans columns [i*q, (i+1)*q) of a random orthonormal matrix, so
    the manifolds are exactly orthogonal (well-separated gates).
    """
    q = intrinsic_dim
    if num_tasks * q > ambient_dim:
        raise ParameterError("num_tasks * intrinsic_dim exceeds ambient dim")
    rng = np.random.default_rng(seed)
    full = _orthonormal_basis(ambient_dim, num_tasks * q, rng)
    tasks = []
    for i in range(num_tasks):
        task_rng = np.random.default_rng(seed + 1000 + i)
        basis = full[:, i * q:(i + 1) * q]
        offset = task_rng.normal(0, 1.0, size=ambient_dim)
        labels = task_rng.integers(0, classes, size=samples)
        centers = task_rng.normal(0, center_scale, size=(classes, q))
        coords = centers[labels] + task_rng.normal(size=(samples, q))
        x = offset + coords @ basis.T + noise * task_rng.normal(size=(samples, ambient_dim))
        tasks.append(LabeledDataset(x.astype(np.float32), labels, classes, f"task{i}"))
    return tasks
