"""Synthetic datasets, heterogeneous partitioning, and CSV ingestion.

Partitioners return index lists into a source dataset, one list per
client, always disjoint and non-empty.  Heterogeneity comes in two
flavors: pathological (each client sees a fixed number of label
classes) and practical (per-class client shares drawn from a Dirichlet
distribution; smaller beta means more skew).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class Dataset:
    """Feature matrix, integer labels in 0..num_classes-1, and the class count."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        self.labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise ValueError(
                f"{self.labels.shape[0]} labels for {self.features.shape[0]} feature rows"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got [{self.labels.min()}, {self.labels.max()}]"
            )

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)


@dataclass
class PartitionPlan:
    """Per-client sample index lists into a source dataset."""

    assignments: list[np.ndarray]

    def __post_init__(self):
        self.assignments = [np.asarray(a, dtype=np.int64) for a in self.assignments]
        seen: set[int] = set()
        for ci, idx in enumerate(self.assignments):
            if idx.size == 0:
                raise ValueError(f"client {ci} received no samples")
            as_set = set(int(i) for i in idx)
            if seen & as_set:
                raise ValueError(f"client {ci} shares samples with another client")
            seen |= as_set

    @property
    def num_clients(self) -> int:
        return len(self.assignments)

    def client_datasets(self, ds: Dataset) -> list[Dataset]:
        return [ds.subset(idx) for idx in self.assignments]


@dataclass(frozen=True)
class DirichletConfig:
    beta: float
    num_clients: int
    seed: int
    min_samples_per_client: int = 1

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if self.min_samples_per_client < 0:
            raise ValueError("min_samples_per_client must be >= 0")


def gen_synthetic(
    num_classes: int,
    samples_per_class: int,
    dim: int,
    class_separation: float,
    seed: int,
) -> Dataset:
    """Gaussian blobs with unit covariance.

    Class means sit on a seeded random sphere of radius
    ``class_separation``; separation 0 collapses all classes onto one blob.
    """
    if num_classes < 1 or samples_per_class < 1 or dim < 1:
        raise ValueError("num_classes, samples_per_class, and dim must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    features = np.empty((num_classes * samples_per_class, dim))
    labels = np.empty(num_classes * samples_per_class, dtype=np.int64)
    for c in range(num_classes):
        direction = rng.normal(size=dim)
        center = class_separation * direction / np.linalg.norm(direction)
        block = slice(c * samples_per_class, (c + 1) * samples_per_class)
        features[block] = center + rng.normal(size=(samples_per_class, dim))
        labels[block] = c
    return Dataset(features, labels, num_classes)


def split_train_test(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded random split; the test side is held centrally for evaluation."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(ds.num_samples)
    cut = int(round(train_fraction * ds.num_samples))
    return ds.subset(order[:cut]), ds.subset(order[cut:])


def partition_iid(ds: Dataset, num_clients: int, seed: int) -> PartitionPlan:
    """Random equal-size split; sizes differ by at most one."""
    if num_clients < 1 or num_clients > ds.num_samples:
        raise ValueError(
            f"num_clients must be in [1, {ds.num_samples}], got {num_clients}"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(ds.num_samples)
    return PartitionPlan([np.sort(part) for part in np.array_split(order, num_clients)])


def partition_pathological(
    ds: Dataset, num_clients: int, classes_per_client: int, seed: int
) -> PartitionPlan:
    """Fixed number of label classes per client via equal per-class shards.

    Each class's samples are split into equal shards; every client receives
    one shard from each of ``classes_per_client`` distinct classes.
    """
    k = ds.num_classes
    if classes_per_client < 1 or classes_per_client > k:
        raise ValueError(
            f"classes_per_client must be in [1, {k}], got {classes_per_client}"
        )
    total_shards = num_clients * classes_per_client
    if total_shards % k != 0:
        raise ValueError(
            f"cannot cover {total_shards} shards ({num_clients} clients x "
            f"{classes_per_client} classes) with {k} classes: not divisible"
        )
    shards_per_class = total_shards // k
    rng = np.random.Generator(np.random.PCG64(seed))

    shards: dict[int, list[np.ndarray]] = {}
    for c in range(k):
        idx = np.flatnonzero(ds.labels == c)
        if idx.size < shards_per_class:
            raise ValueError(
                f"class {c} has {idx.size} samples but needs {shards_per_class} "
                "non-empty shards"
            )
        idx = rng.permutation(idx)
        shard_size = idx.size // shards_per_class
        shards[c] = [
            idx[s * shard_size : (s + 1) * shard_size] for s in range(shards_per_class)
        ]

    # Cyclic class assignment guarantees distinct classes per client and
    # exactly shards_per_class uses of every class.
    client_order = rng.permutation(num_clients)
    class_order = rng.permutation(k)
    next_shard = {c: 0 for c in range(k)}
    assignments: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
    slot = 0
    for client in client_order:
        for _ in range(classes_per_client):
            c = int(class_order[slot % k])
            assignments[client].append(shards[c][next_shard[c]])
            next_shard[c] += 1
            slot += 1
    return PartitionPlan([np.sort(np.concatenate(parts)) for parts in assignments])


def _largest_remainder(shares: np.ndarray, total: int) -> np.ndarray:
    quotas = shares * total
    counts = np.floor(quotas).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        # Stable sort keeps client-index order among tied remainders.
        order = np.argsort(-(quotas - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def partition_dirichlet(ds: Dataset, cfg: DirichletConfig) -> PartitionPlan:
    """Per-class client shares drawn from Dir(beta); largest-remainder rounding.

    Redraws (up to 100 times) until every client holds at least
    ``min_samples_per_client`` samples, then errors.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    class_indices = [np.flatnonzero(ds.labels == c) for c in range(ds.num_classes)]
    for _ in range(100):
        assignments: list[list[np.ndarray]] = [[] for _ in range(cfg.num_clients)]
        for idx in class_indices:
            if idx.size == 0:
                continue
            shares = rng.dirichlet(np.full(cfg.num_clients, cfg.beta))
            counts = _largest_remainder(shares, idx.size)
            shuffled = rng.permutation(idx)
            start = 0
            for client, count in enumerate(counts):
                if count > 0:
                    assignments[client].append(shuffled[start : start + count])
                start += count
        sizes = [sum(a.size for a in parts) for parts in assignments]
        if min(sizes) >= max(cfg.min_samples_per_client, 1):
            return PartitionPlan(
                [np.sort(np.concatenate(parts)) for parts in assignments]
            )
    raise ValueError(
        f"could not give every client >= {cfg.min_samples_per_client} samples "
        "after 100 draws; lower min_samples_per_client or raise beta"
    )


def load_csv_dataset(path, label_column: str) -> Dataset:
    """Parse a headered CSV of numeric features and integer labels.

    Rows containing NaN features are dropped with a counted warning; any
    other parse failure raises with its line number.  Labels are remapped
    to 0..k-1 in sorted order, which is stable across loads.
    """
    features: list[list[float]] = []
    raw_labels: list[int] = []
    dropped = 0
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ValueError(f"{path}: no column named '{label_column}' in header")
        label_pos = header.index(label_column)
        feature_pos = [i for i in range(len(header)) if i != label_pos]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: line {lineno}: {len(row)} fields, expected {len(header)}"
                )
            try:
                values = [float(row[i]) for i in feature_pos]
                label_text = row[label_pos].strip()
                label = int(label_text)
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: could not parse row") from None
            if any(np.isnan(v) or np.isinf(v) for v in values):
                dropped += 1
                continue
            features.append(values)
            raw_labels.append(label)
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} rows with non-finite features")
    if not features:
        raise ValueError(f"{path}: no usable data rows")
    classes = sorted(set(raw_labels))
    remap = {c: i for i, c in enumerate(classes)}
    labels = np.array([remap[c] for c in raw_labels], dtype=np.int64)
    return Dataset(np.array(features), labels, len(classes))
