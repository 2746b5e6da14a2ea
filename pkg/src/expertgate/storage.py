"""On-disk formats: datasets (EGD1 binary / CSV), weight files (EGW1),
reference statistics, and the model-store directory with its manifest.

All binary layouts are little-endian and fixed-width so other
implementations can read the same store.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, StoreCorruptError
from .experts import ExpertModel, LabeledDataset
from .gate import AutoencoderGate
from .gating import TransferMethod
from .nn_core import Activation, DenseLayer
from .preprocess import ReferenceStats

DATASET_MAGIC = b"EGD1"
WEIGHTS_MAGIC = b"EGW1"
STATS_MAGIC = b"EGS1"
MANIFEST_NAME = "manifest.tsv"
STATS_NAME = "stats.egw"

_ACT_CODES = {Activation.IDENTITY: 0, Activation.RELU: 1, Activation.SIGMOID: 2}
_CODE_ACTS = {v: k for k, v in _ACT_CODES.items()}


# ---------------------------------------------------------------- datasets

def save_dataset_egd1(data: LabeledDataset, path) -> None:
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<III", data.n, data.dim, data.class_count))
        f.write(np.ascontiguousarray(data.features, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(data.labels, dtype="<i4").tobytes())


def save_dataset_csv(data: LabeledDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([f"f{j}" for j in range(data.dim)] + ["label"])
        for row, label in zip(data.features, data.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def _load_dataset_egd1(raw: bytes, path, task_name: str) -> LabeledDataset:
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    n, d, c = struct.unpack("<III", raw[4:16])
    expected = 16 + 4 * n * d + 4 * n
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    features = np.frombuffer(raw, dtype="<f4", count=n * d, offset=16).reshape(n, d)
    labels = np.frombuffer(raw, dtype="<i4", count=n, offset=16 + 4 * n * d)
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise FormatError(f"{path}: label out of range [0, {c})")
    return LabeledDataset(features.copy(), labels.copy(), c, task_name)


def _load_dataset_csv(path, task_name: str) -> LabeledDataset:
    with open(path, "r", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        d = len(header) - 1
        if d < 1 or header != [f"f{j}" for j in range(d)] + ["label"]:
            raise FormatError(f"{path}: bad CSV header")
        features, labels = [], []
        for row in reader:
            if len(row) != d + 1:
                raise FormatError(f"{path}: row with {len(row)} fields, expected {d + 1}")
            try:
                features.append([float(v) for v in row[:d]])
                labels.append(int(row[d]))
            except ValueError as exc:
                raise FormatError(f"{path}: {exc}") from exc
    if not features:
        raise FormatError(f"{path}: no data rows")
    labels = np.asarray(labels)
    if labels.min() < 0:
        raise FormatError(f"{path}: negative label")
    c = int(labels.max()) + 1
    return LabeledDataset(np.asarray(features, dtype=np.float32), labels, c, task_name)


def load_dataset(path, task_name: str | None = None) -> LabeledDataset:
    """Load EGD1 or CSV by sniffing the magic bytes."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    name = task_name if task_name is not None else path.stem
    raw = path.read_bytes()
    if raw[:4] == DATASET_MAGIC:
        return _load_dataset_egd1(raw, path, name)
    try:
        return _load_dataset_csv(path, name)
    except (csv.Error, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: not EGD1 and not parseable as CSV ({exc})") from exc


# ------------------------------------------------------------ weight files

def save_layers(path, layers, names=()) -> None:
    """EGW1: magic, layer count, per-layer (rows, cols, act) header + W + b,
    then a footer of UTF-8 names (head names for experts, empty for gates)."""
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<I", len(layers)))
        for layer in layers:
            f.write(struct.pack("<III", layer.out_dim, layer.in_dim,
                                _ACT_CODES[layer.activation]))
            f.write(np.ascontiguousarray(layer.w, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(layer.b, dtype="<f4").tobytes())
        f.write(struct.pack("<I", len(names)))
        for name in names:
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)


def load_layers(path):
    """Returns (layers, names). Raises FormatError on any layout violation."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: bad magic")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise FormatError(f"{path}: truncated file")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    layers = []
    for _ in range(count):
        rows, cols, code = struct.unpack("<III", take(12))
        if code not in _CODE_ACTS:
            raise FormatError(f"{path}: unknown activation code {code}")
        w = np.frombuffer(take(4 * rows * cols), dtype="<f4").reshape(rows, cols).copy()
        b = np.frombuffer(take(4 * rows), dtype="<f4").copy()
        layers.append(DenseLayer(w, b, _CODE_ACTS[code]))
    (n_names,) = struct.unpack("<I", take(4))
    names = []
    for _ in range(n_names):
        (ln,) = struct.unpack("<I", take(4))
        names.append(take(ln).decode("utf-8"))
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes")
    return layers, names


def save_gate(gate: AutoencoderGate, path) -> None:
    save_layers(path, [gate.encoder, gate.decoder])


def load_gate(path, task_name: str, stats_source_id: str) -> AutoencoderGate:
    layers, _ = load_layers(path)
    if len(layers) != 2:
        raise FormatError(f"{path}: gate file must hold exactly 2 layers")
    return AutoencoderGate(layers[0], layers[1], stats_source_id, task_name)


def save_expert(expert: ExpertModel, path) -> None:
    names = list(expert.heads.keys())
    save_layers(path, [expert.body] + [expert.heads[n] for n in names], names)


def load_expert(path, origin: str = "", method: TransferMethod = TransferMethod.SCRATCH) -> ExpertModel:
    layers, names = load_layers(path)
    if len(layers) != len(names) + 1:
        raise FormatError(f"{path}: expert file needs one body plus one layer per head name")
    heads = dict(zip(names, layers[1:]))
    return ExpertModel(layers[0], heads, origin, method)


# ------------------------------------------------------------------- stats

def save_stats(stats: ReferenceStats, path) -> None:
    encoded = stats.source_id.encode("utf-8")
    with open(path, "wb") as f:
        f.write(STATS_MAGIC)
        f.write(struct.pack("<I", stats.dim))
        f.write(np.ascontiguousarray(stats.mean, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(stats.std, dtype="<f4").tobytes())
        f.write(struct.pack("<I", len(encoded)))
        f.write(encoded)


def load_stats(path) -> ReferenceStats:
    raw = Path(path).read_bytes()
    if raw[:4] != STATS_MAGIC:
        raise FormatError(f"{path}: bad magic")
    (d,) = struct.unpack("<I", raw[4:8])
    need = 8 + 8 * d + 4
    if len(raw) < need:
        raise FormatError(f"{path}: truncated stats file")
    mean = np.frombuffer(raw, dtype="<f4", count=d, offset=8).copy()
    std = np.frombuffer(raw, dtype="<f4", count=d, offset=8 + 4 * d).copy()
    (ln,) = struct.unpack("<I", raw[8 + 8 * d:12 + 8 * d])
    source_id = raw[12 + 8 * d:12 + 8 * d + ln].decode("utf-8")
    return ReferenceStats(mean, std, source_id)


# ---------------------------------------------------------------- manifest

@dataclass
class ManifestRow:
    task_name: str
    gate_file: str
    expert_file: str
    method: TransferMethod
    chosen_prior: str
    rel: float | None  # None for the first task (no priors)


def save_manifest(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in rows:
            rel = "" if r.rel is None else repr(float(r.rel))
            f.write("\t".join([r.task_name, r.gate_file, r.expert_file,
                               r.method.value, r.chosen_prior, rel]) + "\n")


def load_manifest(path):
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise StoreCorruptError(f"{path}:{line_no}: expected 6 fields")
            task, gate_file, expert_file, method, prior, rel = parts
            try:
                rows.append(ManifestRow(task, gate_file, expert_file,
                                        TransferMethod(method), prior,
                                        None if rel == "" else float(rel)))
            except ValueError as exc:
                raise StoreCorruptError(f"{path}:{line_no}: {exc}") from exc
    return rows
