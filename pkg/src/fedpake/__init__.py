"""Deterministic federated-learning simulator.

The centerpiece is an aggregation strategy that weights client model
parameters by the skew of their cross-client distribution, alongside
FedAVG and FedProx baselines, non-IID data partitioners, a small
from-scratch MLP, and a config-driven experiment harness.
"""

from fedpake.params import (
    LayerMatrix,
    LayerStats,
    LayerTensor,
    ModelParams,
    coefficient_of_variation,
    column_mean,
    flatten_model,
    load_checkpoint,
    normalize_cv,
    save_checkpoint,
    squared_deviation,
    unflatten_model,
)
from fedpake.aggregation import (
    DispersionMask,
    FedPakeConfig,
    aggregate_layer,
    aggregate_model,
    fedavg_aggregate,
)
from fedpake.model import LocalTrainConfig, MLPSpec, MLPState, init_mlp, train_local
from fedpake.data import Dataset, DirichletConfig, PartitionPlan
from fedpake.federation import ExperimentResult, FederationConfig, RoundRecord, run_experiment

__version__ = "0.1.0"

__all__ = [
    "LayerTensor",
    "ModelParams",
    "LayerMatrix",
    "LayerStats",
    "column_mean",
    "coefficient_of_variation",
    "normalize_cv",
    "squared_deviation",
    "flatten_model",
    "unflatten_model",
    "save_checkpoint",
    "load_checkpoint",
    "FedPakeConfig",
    "DispersionMask",
    "aggregate_layer",
    "aggregate_model",
    "fedavg_aggregate",
    "MLPSpec",
    "MLPState",
    "LocalTrainConfig",
    "init_mlp",
    "train_local",
    "Dataset",
    "PartitionPlan",
    "DirichletConfig",
    "FederationConfig",
    "RoundRecord",
    "ExperimentResult",
    "run_experiment",
]
