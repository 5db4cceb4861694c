"""Parameter containers and cross-client dispersion statistics.

Models travel between clients and server as :class:`ModelParams`, an
ordered list of named flat float64 tensors.  For aggregation, one layer's
parameters from all participating clients are stacked into a
:class:`LayerMatrix` (clients x positions), from which the column mean,
squared deviations, and coefficient of variation are computed.

The coefficient of variation divides by the column mean, which can be
zero or negative for model weights; we divide by ``|mean| + 1e-12``
instead, which keeps the score non-negative and finite (see README).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CV_EPS = 1e-12

# 17 significant digits round-trip any float64 exactly.
FLOAT_FMT = "%.17g"


def _as_float_vector(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return np.ascontiguousarray(arr.reshape(-1))


@dataclass
class LayerTensor:
    """One named layer unit: a flat row-major float64 vector plus its shape."""

    name: str
    shape: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        if any(s <= 0 for s in self.shape):
            raise ValueError(f"layer '{self.name}': shape entries must be positive, got {self.shape}")
        self.values = _as_float_vector(self.values)
        expected = math.prod(self.shape)
        if self.values.size != expected:
            raise ValueError(
                f"layer '{self.name}': {self.values.size} values for shape {self.shape} "
                f"(expected {expected})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"layer '{self.name}': values must be finite")

    @property
    def size(self) -> int:
        return self.values.size

    def reshaped(self) -> np.ndarray:
        """Row-major view with the layer's natural shape."""
        return self.values.reshape(self.shape)

    def copy(self) -> "LayerTensor":
        return LayerTensor(self.name, self.shape, self.values.copy())


@dataclass
class ModelParams:
    """Ordered list of layer tensors; the unit shipped between clients and server."""

    layers: list[LayerTensor]

    def __post_init__(self):
        names = [t.name for t in self.layers]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate layer names: {names}")

    def layer(self, name: str) -> LayerTensor:
        for t in self.layers:
            if t.name == name:
                return t
        raise KeyError(f"no layer named '{name}'")

    def layer_names(self) -> list[str]:
        return [t.name for t in self.layers]

    def copy(self) -> "ModelParams":
        return ModelParams([t.copy() for t in self.layers])

    def same_structure(self, other: "ModelParams") -> bool:
        return [(t.name, t.shape) for t in self.layers] == [
            (t.name, t.shape) for t in other.layers
        ]


@dataclass
class LayerMatrix:
    """One layer's parameters from all participating clients, stacked row-wise."""

    clients: list[int]
    data: np.ndarray

    def __post_init__(self):
        self.clients = [int(c) for c in self.clients]
        self.data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if self.data.ndim != 2:
            raise ValueError(f"data must be 2-D, got ndim={self.data.ndim}")
        if self.data.shape[0] != len(self.clients):
            raise ValueError(
                f"{len(self.clients)} client ids for {self.data.shape[0]} rows"
            )
        if len(set(self.clients)) != len(self.clients):
            raise ValueError(f"duplicate client ids: {self.clients}")
        if self.data.size and not np.all(np.isfinite(self.data)):
            raise ValueError("layer matrix entries must be finite")

    @property
    def num_clients(self) -> int:
        return self.data.shape[0]

    @property
    def num_positions(self) -> int:
        return self.data.shape[1]

    def sorted_by_client(self) -> "LayerMatrix":
        """Rows reordered by ascending client id (canonical order)."""
        order = np.argsort(np.asarray(self.clients), kind="stable")
        return LayerMatrix([self.clients[i] for i in order], self.data[order])


@dataclass
class LayerStats:
    """Column mean, squared deviations, and (normalized) coefficient of variation."""

    mean: np.ndarray
    sq_dev: np.ndarray
    cv: np.ndarray
    cv_norm: np.ndarray = field(repr=False)


def column_mean(w: LayerMatrix | np.ndarray) -> np.ndarray:
    """Average over the client dimension, one value per position."""
    data = w.data if isinstance(w, LayerMatrix) else np.asarray(w, dtype=np.float64)
    if data.shape[0] == 0:
        raise ValueError("empty client set")
    return data.mean(axis=0)


def squared_deviation(w: LayerMatrix | np.ndarray) -> np.ndarray:
    """Per (client, position) squared deviation from the column mean."""
    data = w.data if isinstance(w, LayerMatrix) else np.asarray(w, dtype=np.float64)
    return (data - column_mean(data)) ** 2


def coefficient_of_variation(w: LayerMatrix | np.ndarray) -> np.ndarray:
    """Population std over |column mean| + eps, one non-negative value per position."""
    data = w.data if isinstance(w, LayerMatrix) else np.asarray(w, dtype=np.float64)
    mean = column_mean(data)
    std = np.sqrt(((data - mean) ** 2).mean(axis=0))
    return std / (np.abs(mean) + CV_EPS)


def normalize_cv(cv: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant vector maps to all zeros."""
    cv = np.asarray(cv, dtype=np.float64)
    if not np.all(np.isfinite(cv)):
        raise ValueError("cv must be finite")
    lo = cv.min()
    hi = cv.max()
    if hi == lo:
        return np.zeros_like(cv)
    return (cv - lo) / (hi - lo)


def layer_stats(w: LayerMatrix) -> LayerStats:
    """All dispersion statistics of one layer matrix in a single pass."""
    mean = column_mean(w)
    sq = (w.data - mean) ** 2
    cv = np.sqrt(sq.mean(axis=0)) / (np.abs(mean) + CV_EPS)
    return LayerStats(mean=mean, sq_dev=sq, cv=cv, cv_norm=normalize_cv(cv))


def layer_matrix(models: list[ModelParams], layer_index: int, clients=None) -> LayerMatrix:
    """Stack one layer from several models into a clients x positions matrix."""
    if not models:
        raise ValueError("empty client set")
    if clients is None:
        clients = list(range(len(models)))
    ref = models[0].layers[layer_index]
    rows = []
    for m in models:
        t = m.layers[layer_index]
        if t.name != ref.name or t.shape != ref.shape:
            raise ValueError(
                f"layer mismatch at index {layer_index}: "
                f"'{t.name}' {t.shape} vs '{ref.name}' {ref.shape}"
            )
        rows.append(t.values)
    return LayerMatrix(list(clients), np.stack(rows, axis=0))


def flatten_model(m: ModelParams) -> list[np.ndarray]:
    """Per-layer flat value vectors (copies), in layer order."""
    return [t.values.copy() for t in m.layers]


def unflatten_model(vectors: list[np.ndarray], template: ModelParams) -> ModelParams:
    """Rebuild a model from per-layer flat vectors using the template's names/shapes."""
    if len(vectors) != len(template.layers):
        raise ValueError(
            f"{len(vectors)} vectors for {len(template.layers)} layers"
        )
    layers = []
    for vec, t in zip(vectors, template.layers):
        vec = _as_float_vector(vec)
        if vec.size != t.size:
            raise ValueError(
                f"layer '{t.name}': expected {t.size} values, got {vec.size}"
            )
        layers.append(LayerTensor(t.name, t.shape, vec))
    return ModelParams(layers)


def model_as_matrix(models: list[ModelParams]) -> np.ndarray:
    """All layers of each model pooled into one clients x total-positions matrix."""
    if not models:
        raise ValueError("empty client set")
    return np.stack([np.concatenate(flatten_model(m)) for m in models], axis=0)


def save_checkpoint(m: ModelParams, path) -> None:
    """Write the documented line-oriented checkpoint format (17 significant digits)."""
    with open(path, "w", encoding="ascii") as f:
        f.write("# fedpake model checkpoint v1\n")
        for t in m.layers:
            if any(ch.isspace() for ch in t.name):
                raise ValueError(f"layer name '{t.name}' must not contain whitespace")
            f.write(f"layer {t.name}\n")
            f.write("shape " + " ".join(str(s) for s in t.shape) + "\n")
            f.write("values " + " ".join(FLOAT_FMT % v for v in t.values) + "\n")


def load_checkpoint(path) -> ModelParams:
    """Parse a checkpoint written by :func:`save_checkpoint`."""
    layers: list[LayerTensor] = []
    name = None
    shape: tuple[int, ...] | None = None
    with open(path, "r", encoding="ascii") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            if key == "layer":
                name = rest.strip()
                shape = None
            elif key == "shape":
                if name is None:
                    raise ValueError(f"line {lineno}: 'shape' before 'layer'")
                shape = tuple(int(s) for s in rest.split())
            elif key == "values":
                if name is None or shape is None:
                    raise ValueError(f"line {lineno}: 'values' before 'layer'/'shape'")
                values = np.array([float(s) for s in rest.split()], dtype=np.float64)
                layers.append(LayerTensor(name, shape, values))
                name, shape = None, None
            else:
                raise ValueError(f"line {lineno}: unknown directive '{key}'")
    return ModelParams(layers)
