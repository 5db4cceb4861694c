"""Small MLP with from-scratch forward/backward passes and local training.

Parameters live in :class:`ModelParams` so they plug straight into the
aggregation pipeline: each weight matrix and each bias vector is its own
layer unit.  Training is plain seeded mini-batch SGD on softmax
cross-entropy, with an optional proximal pull toward a reference model
(FedProx-style) when ``prox_mu > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedpake.data import Dataset
from fedpake.params import LayerTensor, ModelParams

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MLPSpec:
    """Architecture: layer sizes (input, hidden..., output), activation, init seed."""

    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if any(s <= 0 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.layer_sizes[-1] < 2:
            raise ValueError("output size must be >= 2")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")


@dataclass
class MLPState:
    """Spec plus current parameters (fc<i>.weight / fc<i>.bias layer units)."""

    spec: MLPSpec
    params: ModelParams

    def replaced(self, params: ModelParams) -> "MLPState":
        if not params.same_structure(self.params):
            raise ValueError("replacement parameters do not match the architecture")
        return MLPState(self.spec, params)


@dataclass(frozen=True)
class LocalTrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 64
    local_epochs: int = 1
    prox_mu: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.prox_mu < 0:
            raise ValueError("prox_mu must be >= 0")


@dataclass
class EvalResult:
    accuracy: float
    mean_loss: float


def init_mlp(spec: MLPSpec) -> MLPState:
    """He-uniform weights, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(spec.layer_sizes, spec.layer_sizes[1:])):
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(LayerTensor(f"fc{i}.weight", (fan_in, fan_out), w.reshape(-1)))
        layers.append(LayerTensor(f"fc{i}.bias", (fan_out,), np.zeros(fan_out)))
    return MLPState(spec, ModelParams(layers))


def _weights_and_biases(state: MLPState) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    layers = state.params.layers
    for i in range(len(layers) // 2):
        w = layers[2 * i].reshaped()
        b = layers[2 * i + 1].reshaped()
        out.append((w, b))
    return out


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def forward(state: MLPState, features: np.ndarray) -> np.ndarray:
    """Logits for a batch; feature width must match the input size."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != state.spec.layer_sizes[0]:
        raise ValueError(
            f"feature width {x.shape[1]} does not match input size "
            f"{state.spec.layer_sizes[0]}"
        )
    wb = _weights_and_biases(state)
    a = x
    for w, b in wb[:-1]:
        a = _activate(a @ w + b, state.spec.activation)
    w, b = wb[-1]
    return a @ w + b


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy of a batch."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError(
            f"label out of range: got values in "
            f"[{labels.min()}, {labels.max()}] for {logits.shape[1]} classes"
        )
    log_p = _log_softmax(logits)
    return float(-log_p[np.arange(labels.size), labels].mean())


def backward(state: MLPState, features: np.ndarray, labels: np.ndarray) -> list[np.ndarray]:
    """Gradient of the mean cross-entropy w.r.t. every layer unit (flat vectors)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    y = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    wb = _weights_and_biases(state)
    kind = state.spec.activation

    # Forward, caching activations.
    acts = [x]
    pre = []
    a = x
    for w, b in wb[:-1]:
        z = a @ w + b
        pre.append(z)
        a = _activate(z, kind)
        acts.append(a)
    w, b = wb[-1]
    logits = a @ w + b
    if y.min() < 0 or y.max() >= logits.shape[1]:
        raise ValueError(
            f"label out of range: got values in [{y.min()}, {y.max()}] "
            f"for {logits.shape[1]} classes"
        )

    probs = np.exp(_log_softmax(logits))
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads: list[np.ndarray] = [None] * (2 * len(wb))
    for i in range(len(wb) - 1, -1, -1):
        w, _ = wb[i]
        grads[2 * i] = (acts[i].T @ delta).reshape(-1)
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ w.T
            if kind == "relu":
                delta = delta * (pre[i - 1] > 0.0)
            else:
                delta = delta * (1.0 - np.tanh(pre[i - 1]) ** 2)
    return grads


def train_local(
    state: MLPState,
    dataset: Dataset,
    cfg: LocalTrainConfig,
    global_ref: ModelParams | None = None,
    seed: int = 0,
) -> MLPState:
    """Seeded mini-batch SGD for ``local_epochs`` passes; returns a new state.

    With ``prox_mu > 0`` and a reference model, each step also descends the
    proximal penalty (mu/2) * ||w - w_ref||^2.  The last partial batch is
    kept.  Deterministic given (state, dataset, cfg, seed).
    """
    if dataset.num_samples == 0:
        raise ValueError("empty dataset")
    use_prox = cfg.prox_mu > 0.0 and global_ref is not None
    if use_prox and not global_ref.same_structure(state.params):
        raise ValueError("reference model does not match the architecture")

    vectors = [t.values.copy() for t in state.params.layers]
    ref_vectors = [t.values for t in global_ref.layers] if use_prox else None
    work = state.replaced(
        ModelParams(
            [
                LayerTensor(t.name, t.shape, v)
                for t, v in zip(state.params.layers, vectors)
            ]
        )
    )
    rng = np.random.Generator(np.random.PCG64(seed))
    n = dataset.num_samples
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grads = backward(work, dataset.features[batch], dataset.labels[batch])
            for li, g in enumerate(grads):
                if use_prox:
                    g = g + cfg.prox_mu * (vectors[li] - ref_vectors[li])
                vectors[li] -= cfg.learning_rate * g
    return state.replaced(
        ModelParams(
            [
                LayerTensor(t.name, t.shape, v)
                for t, v in zip(state.params.layers, vectors)
            ]
        )
    )


def evaluate(state: MLPState, dataset: Dataset) -> EvalResult:
    """Argmax accuracy and mean cross-entropy on a dataset."""
    if dataset.num_samples == 0:
        raise ValueError("empty dataset")
    logits = forward(state, dataset.features)
    predictions = logits.argmax(axis=1)
    accuracy = float((predictions == dataset.labels).mean())
    return EvalResult(accuracy=accuracy, mean_loss=cross_entropy(logits, dataset.labels))
