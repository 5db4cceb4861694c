"""Experiment config files: a flat, documented `key = value` schema.

Lines hold one `key = value` pair; `#` starts a comment.  Every key is
checked against the schema below (unknown keys are rejected), values are
type- and range-checked, and defaults are applied for anything omitted.
Required keys: strategy, num_clients, rounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from fedpake.aggregation import SQDEV_NORMALIZATIONS, FedPakeConfig
from fedpake.federation import STRATEGIES, FederationConfig
from fedpake.model import ACTIVATIONS, LocalTrainConfig, MLPSpec

DATASETS = ("synthetic", "csv")
PARTITIONS = ("dirichlet", "pathological", "iid")


@dataclass
class ExperimentConfig:
    # federation
    strategy: str
    num_clients: int
    rounds: int
    join_ratio: float = 1.0
    eval_tail: int = 10
    seed: int = 0
    # local training
    learning_rate: float = 0.05
    batch_size: int = 64
    local_epochs: int = 1
    prox_mu: float = 0.001
    # fedpake aggregation
    lambda_: float = 0.2
    micro_classes: int = 4
    macro_classes: int = 4
    delta: float = 0.2
    delta_early_stop: bool = False
    renormalize_weights: bool = False
    sqdev_normalization: str = "per_layer_max"
    # model
    hidden_sizes: tuple[int, ...] = (32,)
    activation: str = "relu"
    # data
    dataset: str = "synthetic"
    num_classes: int = 4
    samples_per_class: int = 2500
    dim: int = 8
    class_separation: float = 3.0
    train_fraction: float = 0.75
    csv_path: str = ""
    label_column: str = "label"
    # partition
    partition: str = "dirichlet"
    beta: float = 0.1
    classes_per_client: int = 2
    min_samples_per_client: int = 1
    # output
    out_dir: str = "results"
    # sweep grids (only used by the `sweep` verb)
    sweep_lambda: tuple[float, ...] = ()
    sweep_micro_classes: tuple[int, ...] = ()
    sweep_macro_classes: tuple[int, ...] = ()

    def federation_config(self) -> FederationConfig:
        return FederationConfig(
            num_clients=self.num_clients,
            rounds=self.rounds,
            strategy=self.strategy,
            join_ratio=self.join_ratio,
            fedpake=self.fedpake_config(),
            local=LocalTrainConfig(
                learning_rate=self.learning_rate,
                batch_size=self.batch_size,
                local_epochs=self.local_epochs,
                prox_mu=self.prox_mu,
            ),
            eval_tail=self.eval_tail,
            seed=self.seed,
        )

    def fedpake_config(self) -> FedPakeConfig:
        return FedPakeConfig(
            lambda_=self.lambda_,
            micro_classes=self.micro_classes,
            macro_classes=self.macro_classes,
            delta=self.delta,
            renormalize_weights=self.renormalize_weights,
            sqdev_normalization=self.sqdev_normalization,
            delta_early_stop=self.delta_early_stop,
        )

    def mlp_spec(self, input_dim: int, output_dim: int) -> MLPSpec:
        sizes = (input_dim,) + tuple(self.hidden_sizes) + (output_dim,)
        return MLPSpec(layer_sizes=sizes, activation=self.activation)


# key -> (type tag, constraint description, validator)
def _in_range(lo, hi, lo_open=False, hi_open=False):
    def check(v):
        ok_lo = v > lo if lo_open else v >= lo
        ok_hi = v < hi if hi_open else v <= hi
        return ok_lo and ok_hi

    return check


_SCHEMA: dict[str, tuple[str, str, Any]] = {
    "strategy": ("choice", "|".join(STRATEGIES), None),
    "num_clients": ("int", ">= 1", lambda v: v >= 1),
    "rounds": ("int", ">= 1", lambda v: v >= 1),
    "join_ratio": ("float", "in (0, 1]", _in_range(0.0, 1.0, lo_open=True)),
    "eval_tail": ("int", ">= 1", lambda v: v >= 1),
    "seed": ("int", ">= 0", lambda v: v >= 0),
    "learning_rate": ("float", ">= 0", lambda v: v >= 0),
    "batch_size": ("int", ">= 1", lambda v: v >= 1),
    "local_epochs": ("int", ">= 1", lambda v: v >= 1),
    "prox_mu": ("float", ">= 0", lambda v: v >= 0),
    "lambda": ("float", "in [0, 1]", _in_range(0.0, 1.0)),
    "micro_classes": ("int", ">= 1", lambda v: v >= 1),
    "macro_classes": ("int", ">= 1", lambda v: v >= 1),
    "delta": ("float", "in [0, 1]", _in_range(0.0, 1.0)),
    "delta_early_stop": ("bool", "", None),
    "renormalize_weights": ("bool", "", None),
    "sqdev_normalization": ("choice", "|".join(SQDEV_NORMALIZATIONS), None),
    "hidden_sizes": ("int_list", "each >= 1", lambda v: all(s >= 1 for s in v)),
    "activation": ("choice", "|".join(ACTIVATIONS), None),
    "dataset": ("choice", "|".join(DATASETS), None),
    "num_classes": ("int", ">= 2", lambda v: v >= 2),
    "samples_per_class": ("int", ">= 1", lambda v: v >= 1),
    "dim": ("int", ">= 1", lambda v: v >= 1),
    "class_separation": ("float", ">= 0", lambda v: v >= 0),
    "train_fraction": ("float", "in (0, 1)", _in_range(0.0, 1.0, True, True)),
    "csv_path": ("str", "", None),
    "label_column": ("str", "", None),
    "partition": ("choice", "|".join(PARTITIONS), None),
    "beta": ("float", "> 0", lambda v: v > 0),
    "classes_per_client": ("int", ">= 1", lambda v: v >= 1),
    "min_samples_per_client": ("int", ">= 0", lambda v: v >= 0),
    "out_dir": ("str", "", None),
    "sweep_lambda": ("float_list", "each in [0, 1]", lambda v: all(0 <= x <= 1 for x in v)),
    "sweep_micro_classes": ("int_list", "each >= 1", lambda v: all(x >= 1 for x in v)),
    "sweep_macro_classes": ("int_list", "each >= 1", lambda v: all(x >= 1 for x in v)),
}

REQUIRED_KEYS = ("strategy", "num_clients", "rounds")

# config-file key -> dataclass attribute (where they differ)
_ATTR_FOR_KEY = {"lambda": "lambda_"}

_CHOICE_VALUES = {
    "strategy": STRATEGIES,
    "sqdev_normalization": SQDEV_NORMALIZATIONS,
    "activation": ACTIVATIONS,
    "dataset": DATASETS,
    "partition": PARTITIONS,
}


class ConfigError(ValueError):
    pass


def _convert(key: str, text: str):
    kind, constraint, check = _SCHEMA[key]
    try:
        if kind == "int":
            value: Any = int(text)
        elif kind == "float":
            value = float(text)
        elif kind == "bool":
            lowered = text.lower()
            if lowered in ("true", "yes", "1"):
                value = True
            elif lowered in ("false", "no", "0"):
                value = False
            else:
                raise ValueError(text)
        elif kind == "choice":
            value = text
            if value not in _CHOICE_VALUES[key]:
                raise ValueError(text)
        elif kind == "int_list":
            value = tuple(int(p.strip()) for p in text.split(",") if p.strip())
        elif kind == "float_list":
            value = tuple(float(p.strip()) for p in text.split(",") if p.strip())
        else:  # str
            value = text
    except ValueError:
        raise ConfigError(
            f"key '{key}': could not parse '{text}' as {kind}"
            + (f" ({constraint})" if constraint else "")
        ) from None
    if check is not None and not check(value):
        raise ConfigError(f"key '{key}': value {value!r} violates constraint {constraint}")
    return value


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{source}: line {lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"{source}: line {lineno}: duplicate key '{key}'")
        values[key] = _convert(key, val)

    for key in REQUIRED_KEYS:
        if key not in values:
            raise ConfigError(f"{source}: missing required key '{key}'")

    kwargs = {_ATTR_FOR_KEY.get(k, k): v for k, v in values.items()}
    cfg = ExperimentConfig(**kwargs)
    if "eval_tail" not in values:
        # Default tail (last 10 rounds) clamps to short runs; an explicit
        # eval_tail beyond `rounds` is still rejected below.
        cfg.eval_tail = min(cfg.eval_tail, cfg.rounds)
    _cross_validate(cfg, source)
    return cfg


def _cross_validate(cfg: ExperimentConfig, source: str) -> None:
    if cfg.eval_tail > cfg.rounds:
        raise ConfigError(f"{source}: key 'eval_tail': must be <= rounds ({cfg.rounds})")
    if cfg.macro_classes > cfg.num_clients:
        raise ConfigError(
            f"{source}: key 'macro_classes': must be <= num_clients ({cfg.num_clients})"
        )
    if cfg.dataset == "csv" and not cfg.csv_path:
        raise ConfigError(f"{source}: key 'csv_path': required when dataset = csv")
    if cfg.partition == "pathological" and cfg.classes_per_client > cfg.num_classes:
        raise ConfigError(
            f"{source}: key 'classes_per_client': must be <= num_classes ({cfg.num_classes})"
        )
    # Build the nested configs now so their own validation runs up front.
    cfg.federation_config()


def parse_config(path) -> ExperimentConfig:
    """Read and validate a config file; every failure names the offending key."""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_config_text(text, source=str(path))


def config_keys() -> list[str]:
    """All recognized config keys (for docs and error messages)."""
    return sorted(_SCHEMA)
