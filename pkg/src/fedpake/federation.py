"""Round-based orchestration: sampling, local training, aggregation, tracking.

Clients are stateless; the current global model is re-broadcast to the
sampled clients each round, trained locally, and aggregated according to
the configured strategy.  Every random decision derives from the single
experiment seed (see :mod:`fedpake.seeds`), so a (config, seed) pair
fully determines every round record.

Local-training seeds are derived per round (not per client): clients
with identical data therefore train identically, which makes full
participation FedAVG on replicated data coincide with centralized SGD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from fedpake.aggregation import FedPakeConfig, aggregate_model, fedavg_aggregate
from fedpake.data import Dataset
from fedpake.model import (
    LocalTrainConfig,
    MLPSpec,
    MLPState,
    evaluate,
    init_mlp,
    train_local,
)
from fedpake.params import ModelParams, model_as_matrix
from fedpake.seeds import derive_seed, rng_for

STRATEGIES = ("fedavg", "fedprox", "fedpake")


@dataclass(frozen=True)
class FederationConfig:
    num_clients: int
    rounds: int
    strategy: str = "fedavg"
    join_ratio: float = 1.0
    fedpake: FedPakeConfig = field(default_factory=FedPakeConfig)
    local: LocalTrainConfig = field(default_factory=LocalTrainConfig)
    eval_tail: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0.0 < self.join_ratio <= 1.0:
            raise ValueError("join_ratio must be in (0, 1]")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got '{self.strategy}'")
        if not 1 <= self.eval_tail <= self.rounds:
            raise ValueError("eval_tail must be in [1, rounds]")


@dataclass
class RoundRecord:
    round: int
    mean_train_loss: float
    test_accuracy: float
    sd_mean: float
    sd_max: float
    sd_min: float
    participating: list[int]


@dataclass
class RoundContext:
    """Everything a diagnostics consumer may want about one finished round."""

    record: RoundRecord
    local_models: list[ModelParams]
    sample_counts: list[int]
    global_before: ModelParams
    global_after: ModelParams


@dataclass
class ExperimentResult:
    records: list[RoundRecord]
    final_accuracy: float
    final_model: ModelParams


def sample_clients(num_clients: int, ratio: float, round_idx: int, seed: int) -> list[int]:
    """ceil(ratio * N) distinct clients, deterministic given (seed, round)."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must be in (0, 1]")
    count = math.ceil(ratio * num_clients)
    rng = rng_for(seed, "sample", round_idx)
    chosen = rng.choice(num_clients, size=count, replace=False)
    return sorted(int(c) for c in chosen)


def dispersion_stats(local_models: list[ModelParams]) -> tuple[float, float, float]:
    """Mean/max/min squared deviation from the cross-client mean, all layers pooled."""
    pooled = model_as_matrix(local_models)
    sq = (pooled - pooled.mean(axis=0)) ** 2
    return float(sq.mean()), float(sq.max()), float(sq.min())


def run_round(
    global_state: MLPState,
    participants: list[int],
    round_idx: int,
    cfg: FederationConfig,
    client_datasets: list[Dataset],
    test_set: Dataset,
) -> tuple[MLPState, RoundRecord, RoundContext]:
    """Broadcast, train the sampled clients, aggregate, and evaluate."""
    participants = sorted(participants)
    train_seed = derive_seed(cfg.seed, "train", round_idx)
    global_ref = global_state.params if cfg.strategy == "fedprox" else None

    local_states: list[MLPState] = []
    train_losses: list[float] = []
    for client in participants:
        data = client_datasets[client]
        try:
            local = train_local(global_state, data, cfg.local, global_ref, train_seed)
        except Exception as exc:
            raise RuntimeError(f"round {round_idx}, client {client}: {exc}") from exc
        local_states.append(local)
        train_losses.append(evaluate(local, data).mean_loss)

    local_models = [s.params for s in local_states]
    counts = [client_datasets[c].num_samples for c in participants]
    if cfg.strategy == "fedpake":
        new_params = aggregate_model(local_models, cfg.fedpake)
    else:
        new_params = fedavg_aggregate(list(zip(local_models, counts)))
    new_state = global_state.replaced(new_params)

    sd_mean, sd_max, sd_min = dispersion_stats(local_models)
    test = evaluate(new_state, test_set)
    record = RoundRecord(
        round=round_idx,
        mean_train_loss=float(np.mean(train_losses)),
        test_accuracy=test.accuracy,
        sd_mean=sd_mean,
        sd_max=sd_max,
        sd_min=sd_min,
        participating=participants,
    )
    context = RoundContext(
        record=record,
        local_models=local_models,
        sample_counts=counts,
        global_before=global_state.params,
        global_after=new_params,
    )
    return new_state, record, context


def run_experiment(
    cfg: FederationConfig,
    mlp_spec: MLPSpec,
    client_datasets: list[Dataset],
    test_set: Dataset,
    on_round: Callable[[RoundContext], None] | None = None,
) -> ExperimentResult:
    """T sequential rounds from a seeded initial model.

    The model-init seed is derived from ``cfg.seed`` (``mlp_spec.seed`` is
    ignored), so the experiment seed alone determines the outcome.
    """
    if len(client_datasets) != cfg.num_clients:
        raise ValueError(
            f"{len(client_datasets)} client datasets for {cfg.num_clients} clients"
        )
    state = init_mlp(replace(mlp_spec, seed=derive_seed(cfg.seed, "init")))
    records: list[RoundRecord] = []
    for t in range(1, cfg.rounds + 1):
        participants = sample_clients(cfg.num_clients, cfg.join_ratio, t, cfg.seed)
        state, record, context = run_round(
            state, participants, t, cfg, client_datasets, test_set
        )
        records.append(record)
        if on_round is not None:
            on_round(context)
    tail = [r.test_accuracy for r in records[-cfg.eval_tail :]]
    return ExperimentResult(
        records=records,
        final_accuracy=float(np.mean(tail)),
        final_model=state.params,
    )
