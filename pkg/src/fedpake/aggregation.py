"""Parameter-skew-aware aggregation (FedPake) and the FedAVG baseline.

Per layer, client parameters are split into low- and high-dispersion
positions by thresholding the min-max-normalized coefficient of
variation at ``lambda_``.  Low-dispersion positions take the plain
client mean.  High-dispersion positions are binned per (client,
position) into ``micro_classes`` equal-width classes of normalized
squared deviation; clients are then clustered (at most
``macro_classes`` clusters) by the fraction of high-dispersion
positions on which their bin labels agree, and each cluster
contributes its member mean scaled by a per-position weight
proportional to how often the cluster's modal bin label recurs.

Everything here is a pure function of its inputs; layers can be
aggregated concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fedpake import kernels
from fedpake.params import (
    LayerMatrix,
    ModelParams,
    coefficient_of_variation,
    column_mean,
    layer_matrix,
    layer_stats,
    normalize_cv,
    unflatten_model,
)

SQDEV_NORMALIZATIONS = ("per_layer_max", "per_position_max")


@dataclass(frozen=True)
class FedPakeConfig:
    """Aggregation hyperparameters.

    lambda_: dispersion threshold in [0, 1]; positions with normalized
        cv strictly above it are treated as high-dispersion.
    micro_classes: number of squared-deviation bins (C >= 1).
    macro_classes: maximum number of client clusters (S >= 1).
    delta: similarity threshold in [0, 1]; only consulted when
        delta_early_stop is set, in which case merging stops once the
        best pair's average similarity drops below it.
    renormalize_weights: rescale the per-position cluster weights to
        sum to 1 (convex combination) instead of using them as-is.
    sqdev_normalization: how squared deviations are scaled into [0, 1]
        before binning: by the max over all high-dispersion entries of
        the layer ('per_layer_max') or per position ('per_position_max').
    """

    lambda_: float = 0.2
    micro_classes: int = 4
    macro_classes: int = 4
    delta: float = 0.2
    renormalize_weights: bool = False
    sqdev_normalization: str = "per_layer_max"
    delta_early_stop: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lambda_}")
        if self.micro_classes < 1:
            raise ValueError(f"micro_classes must be >= 1, got {self.micro_classes}")
        if self.macro_classes < 1:
            raise ValueError(f"macro_classes must be >= 1, got {self.macro_classes}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must be in [0, 1], got {self.delta}")
        if self.sqdev_normalization not in SQDEV_NORMALIZATIONS:
            raise ValueError(
                f"sqdev_normalization must be one of {SQDEV_NORMALIZATIONS}, "
                f"got '{self.sqdev_normalization}'"
            )


@dataclass
class DispersionMask:
    """Exact bipartition of a layer's positions into high and low dispersion."""

    high: np.ndarray
    low: np.ndarray

    def __post_init__(self):
        self.high = np.asarray(self.high, dtype=bool)
        self.low = np.asarray(self.low, dtype=bool)
        if self.high.shape != self.low.shape:
            raise ValueError("high/low masks differ in shape")
        if not np.all(self.high ^ self.low):
            raise ValueError("masks must bipartition the positions exactly")

    @property
    def num_high(self) -> int:
        return int(self.high.sum())


@dataclass
class MacroClassing:
    """Client clusters with their per-position tendency labels and weights."""

    clusters: list[list[int]]
    tendencies: list[np.ndarray]
    weights: list[np.ndarray]


@dataclass
class LayerAggregation:
    """Full per-layer pipeline trace; `aggregate` is the global layer vector."""

    aggregate: np.ndarray
    mean: np.ndarray
    cv_norm: np.ndarray
    mask: DispersionMask
    labels: np.ndarray | None = None
    similarity: np.ndarray | None = None
    macro: MacroClassing | None = field(default=None, repr=False)
    clients: list[int] = field(default_factory=list)


def parameter_division(w: LayerMatrix | np.ndarray, lambda_: float) -> DispersionMask:
    """Split positions by thresholding normalized cv strictly above lambda_."""
    cv_norm = normalize_cv(coefficient_of_variation(w))
    high = cv_norm > lambda_
    return DispersionMask(high=high, low=~high)


def _normalized_sqdev(sq_high: np.ndarray, mode: str) -> np.ndarray:
    """Scale high-dispersion squared deviations into [0, 1] for binning."""
    if mode == "per_layer_max":
        top = sq_high.max() if sq_high.size else 0.0
        return sq_high / top if top > 0.0 else np.zeros_like(sq_high)
    col_top = sq_high.max(axis=0)
    safe = np.where(col_top > 0.0, col_top, 1.0)
    return sq_high / safe


def micro_classify(
    w: LayerMatrix | np.ndarray,
    mask: DispersionMask,
    num_classes: int,
    mode: str = "per_layer_max",
) -> np.ndarray:
    """Bin labels in 1..num_classes on high-dispersion positions, 0 elsewhere.

    Squared deviations are normalized to [0, 1] (see ``mode``), then value v
    gets label i where (i-1)/C < v <= i/C; v = 0 gets label 1.
    """
    data = w.data if isinstance(w, LayerMatrix) else np.asarray(w, dtype=np.float64)
    if mode not in SQDEV_NORMALIZATIONS:
        raise ValueError(f"unknown sqdev normalization '{mode}'")
    if mask.high.shape[0] != data.shape[1]:
        raise ValueError("mask width does not match the layer matrix")
    labels = np.zeros(data.shape, dtype=np.int32)
    high_idx = np.flatnonzero(mask.high)
    if high_idx.size == 0:
        return labels
    sq_high = (data[:, high_idx] - column_mean(data)[high_idx]) ** 2
    norm = _normalized_sqdev(sq_high, mode)
    labels[:, high_idx] = kernels.bin_labels(norm, num_classes)
    return labels


def similarity_matrix(labels: np.ndarray, mask: DispersionMask) -> np.ndarray:
    """Pairwise fraction of high-dispersion positions with matching bin labels."""
    num_high = mask.num_high
    if num_high == 0:
        raise ValueError("no high-dispersion positions; similarity is undefined")
    high_labels = np.ascontiguousarray(labels[:, mask.high])
    disagree = kernels.pairwise_disagreements(high_labels)
    return 1.0 - disagree / float(num_high)


def similarity(labels: np.ndarray, mask: DispersionMask, k1: int, k2: int) -> float:
    """Similarity of one client pair (rows k1, k2 of the label matrix)."""
    num_high = mask.num_high
    if num_high == 0:
        raise ValueError("no high-dispersion positions; similarity is undefined")
    disagree = int(
        (labels[k1, mask.high] != labels[k2, mask.high]).sum()
    )
    return 1.0 - disagree / float(num_high)


def _avg_linkage(sim: np.ndarray, members_a: list[int], members_b: list[int]) -> float:
    # Plain ordered summation so ties are reproduced exactly everywhere.
    total = 0.0
    for a in members_a:
        for b in members_b:
            total += sim[a, b]
    return total / (len(members_a) * len(members_b))


def cluster_clients(
    sim: np.ndarray,
    num_clusters: int,
    delta: float | None = None,
    client_ids: list[int] | None = None,
) -> list[list[int]]:
    """Average-linkage agglomerative clustering capped at ``num_clusters``.

    Repeatedly merges the pair of clusters with the highest average
    inter-cluster similarity until at most ``num_clusters`` remain, breaking
    ties by the lowest (min client id of first cluster, min client id of
    second).  When ``delta`` is given, merging also stops once the best
    pair's similarity drops below it.  Returns clusters as sorted lists of
    client ids, ordered by their smallest member.
    """
    sim = np.asarray(sim, dtype=np.float64)
    n = sim.shape[0]
    if num_clusters < 1:
        raise ValueError(f"cluster cap must be >= 1, got {num_clusters}")
    if client_ids is None:
        client_ids = list(range(n))
    if len(client_ids) != n:
        raise ValueError(f"{len(client_ids)} ids for {n} similarity rows")

    # Work on row indices; ids only matter for tie-breaking and output.
    ids = [int(c) for c in client_ids]
    order = sorted(range(n), key=lambda i: ids[i])
    clusters: list[list[int]] = [[i] for i in order]

    while len(clusters) > num_clusters:
        best_sim = -np.inf
        best_key: tuple[int, int] | None = None
        best_pair: tuple[int, int] | None = None
        for p in range(len(clusters)):
            for q in range(p + 1, len(clusters)):
                mins = sorted((ids[clusters[p][0]], ids[clusters[q][0]]))
                key = (mins[0], mins[1])
                avg = _avg_linkage(sim, clusters[p], clusters[q])
                if avg > best_sim or (avg == best_sim and key < best_key):
                    best_sim, best_key, best_pair = avg, key, (p, q)
        if delta is not None and best_sim < delta:
            break
        p, q = best_pair
        merged = sorted(clusters[p] + clusters[q], key=lambda i: ids[i])
        clusters = [c for j, c in enumerate(clusters) if j not in (p, q)]
        clusters.append(merged)
        clusters.sort(key=lambda c: ids[c[0]])

    return [[ids[i] for i in c] for c in clusters]


def class_tendency(labels: np.ndarray, mask: DispersionMask, member_rows: list[int]) -> np.ndarray:
    """Per-position modal bin label within a cluster; ties take the smallest label.

    Zero outside the high-dispersion region.
    """
    if not member_rows:
        raise ValueError("empty cluster")
    q = np.zeros(labels.shape[1], dtype=np.int32)
    high_idx = np.flatnonzero(mask.high)
    if high_idx.size == 0:
        return q
    sub = labels[np.asarray(member_rows)][:, high_idx]
    if sub.min() < 1:
        raise ValueError("labels must be >= 1 on high-dispersion positions")
    top = int(sub.max())
    counts = np.stack([(sub == c).sum(axis=0) for c in range(1, top + 1)], axis=0)
    # argmax takes the first maximum, so ties resolve to the smallest label
    q[high_idx] = counts.argmax(axis=0).astype(np.int32) + 1
    return q


def aggregation_weights(
    tendencies: list[np.ndarray],
    mask: DispersionMask,
    clusters_used: int,
    num_micro: int,
    renormalize: bool = False,
) -> list[np.ndarray]:
    """Per-cluster position weights from tendency-label frequencies.

    On high-dispersion positions, a cluster's weight is the count of
    positions sharing its tendency label there, divided by
    (clusters_used * number of high positions); zero elsewhere.  With
    ``renormalize``, weights are rescaled per position to sum to 1.
    """
    num_high = mask.num_high
    if num_high == 0:
        raise ValueError("no high-dispersion positions; weights are undefined")
    high_idx = np.flatnonzero(mask.high)
    weights = []
    for q in tendencies:
        q_high = q[high_idx]
        if q_high.min() < 1 or q_high.max() > num_micro:
            raise ValueError("tendency labels out of range on high positions")
        freq = np.bincount(q_high, minlength=num_micro + 1)
        w = np.zeros(q.shape[0], dtype=np.float64)
        w[high_idx] = freq[q_high] / (clusters_used * num_high)
        weights.append(w)
    if renormalize:
        stack = np.stack([w[high_idx] for w in weights], axis=0)
        totals = stack.sum(axis=0)
        stack = stack / totals
        for w, row in zip(weights, stack):
            w[high_idx] = row
    return weights


def analyze_layer(w: LayerMatrix, cfg: FedPakeConfig) -> LayerAggregation:
    """Run the full per-layer pipeline and keep every intermediate product.

    Rows are first put in ascending client-id order, so the result is
    invariant under row permutations of the input.
    """
    if w.num_clients == 0:
        raise ValueError("empty client set")
    w = w.sorted_by_client()
    if np.all(w.data == w.data[0]):
        # Identical clients: the mean is exactly the common row, but summing
        # would round; return it untouched so the fixed point is bit-exact.
        width = w.num_positions
        return LayerAggregation(
            aggregate=w.data[0].copy(),
            mean=w.data[0].copy(),
            cv_norm=np.zeros(width),
            mask=DispersionMask(high=np.zeros(width, dtype=bool), low=np.ones(width, dtype=bool)),
            clients=list(w.clients),
        )
    stats = layer_stats(w)
    high = stats.cv_norm > cfg.lambda_
    mask = DispersionMask(high=high, low=~high)

    if mask.num_high == 0:
        # Nothing disperses: the whole pipeline short-circuits to the mean.
        return LayerAggregation(
            aggregate=stats.mean.copy(),
            mean=stats.mean,
            cv_norm=stats.cv_norm,
            mask=mask,
            clients=list(w.clients),
        )

    labels = micro_classify(w, mask, cfg.micro_classes, cfg.sqdev_normalization)
    sim = similarity_matrix(labels, mask)
    clusters = cluster_clients(
        sim,
        cfg.macro_classes,
        delta=cfg.delta if cfg.delta_early_stop else None,
        client_ids=w.clients,
    )
    row_of = {c: i for i, c in enumerate(w.clients)}
    member_rows = [[row_of[c] for c in cluster] for cluster in clusters]

    tendencies = [class_tendency(labels, mask, rows) for rows in member_rows]
    weights = aggregation_weights(
        tendencies, mask, len(clusters), cfg.micro_classes, cfg.renormalize_weights
    )

    high_idx = np.flatnonzero(mask.high)
    out = stats.mean.copy()
    combined = np.zeros(high_idx.size, dtype=np.float64)
    for rows, alpha in zip(member_rows, weights):
        cluster_mean = w.data[np.asarray(rows)][:, high_idx].mean(axis=0)
        combined += alpha[high_idx] * cluster_mean
    out[high_idx] = combined

    return LayerAggregation(
        aggregate=out,
        mean=stats.mean,
        cv_norm=stats.cv_norm,
        mask=mask,
        labels=labels,
        similarity=sim,
        macro=MacroClassing(clusters=clusters, tendencies=tendencies, weights=weights),
        clients=list(w.clients),
    )


def aggregate_layer(w: LayerMatrix, cfg: FedPakeConfig) -> np.ndarray:
    """Global layer vector for one layer matrix."""
    return analyze_layer(w, cfg).aggregate


def aggregate_model(models: list[ModelParams], cfg: FedPakeConfig) -> ModelParams:
    """Apply :func:`aggregate_layer` independently to every layer tensor."""
    if not models:
        raise ValueError("empty client set")
    template = models[0]
    vectors = []
    for li in range(len(template.layers)):
        w = layer_matrix(models, li)
        vectors.append(aggregate_layer(w, cfg))
    return unflatten_model(vectors, template)


def fedavg_aggregate(models: list[tuple[ModelParams, int]]) -> ModelParams:
    """Sample-count-weighted mean of client models (FedAVG)."""
    if not models:
        raise ValueError("empty client set")
    template = models[0][0]
    total = float(sum(count for _, count in models))
    if total <= 0:
        raise ValueError("sample counts must sum to a positive number")
    vectors = [np.zeros(t.size, dtype=np.float64) for t in template.layers]
    for m, count in models:
        if not m.same_structure(template):
            for t, ref in zip(m.layers, template.layers):
                if t.name != ref.name or t.shape != ref.shape:
                    raise ValueError(
                        f"layer mismatch: '{t.name}' {t.shape} vs '{ref.name}' {ref.shape}"
                    )
            raise ValueError("model structures differ")
        share = count / total
        for vec, t in zip(vectors, m.layers):
            vec += share * t.values
    return unflatten_model(vectors, template)
