"""Config-driven command line: run, sweep, inspect, eval-model.

    fedpake run --config exp.cfg [--out DIR] [--seed N] [--dump-diagnostics]
    fedpake sweep --config exp.cfg [--out DIR] [--seed N]
    fedpake inspect --config exp.cfg [--round R] [--hist-layer NAME ...]
    fedpake eval-model --config exp.cfg --model ckpt.txt

Exit code 0 on success; any error prints a message and exits nonzero.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from dataclasses import replace

from fedpake.config import ExperimentConfig, parse_config
from fedpake.data import (
    Dataset,
    DirichletConfig,
    gen_synthetic,
    load_csv_dataset,
    partition_dirichlet,
    partition_iid,
    partition_pathological,
    split_train_test,
)
from fedpake.federation import run_experiment
from fedpake.metrics import (
    write_metrics,
    write_param_histogram,
    write_round_diagnostics,
)
from fedpake.model import evaluate, init_mlp
from fedpake.params import FLOAT_FMT, load_checkpoint, save_checkpoint
from fedpake.seeds import derive_seed


def load_source_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset == "csv":
        return load_csv_dataset(cfg.csv_path, cfg.label_column)
    return gen_synthetic(
        num_classes=cfg.num_classes,
        samples_per_class=cfg.samples_per_class,
        dim=cfg.dim,
        class_separation=cfg.class_separation,
        seed=derive_seed(cfg.seed, "data"),
    )


def build_partition(cfg: ExperimentConfig, train: Dataset):
    seed = derive_seed(cfg.seed, "partition")
    if cfg.partition == "iid":
        return partition_iid(train, cfg.num_clients, seed)
    if cfg.partition == "pathological":
        return partition_pathological(train, cfg.num_clients, cfg.classes_per_client, seed)
    return partition_dirichlet(
        train,
        DirichletConfig(
            beta=cfg.beta,
            num_clients=cfg.num_clients,
            seed=seed,
            min_samples_per_client=cfg.min_samples_per_client,
        ),
    )


def build_experiment(cfg: ExperimentConfig):
    """Materialize (federation config, model spec, client datasets, test set)."""
    source = load_source_dataset(cfg)
    train, test = split_train_test(source, cfg.train_fraction, derive_seed(cfg.seed, "split"))
    plan = build_partition(cfg, train)
    client_datasets = plan.client_datasets(train)
    mlp_spec = cfg.mlp_spec(train.dim, train.num_classes)
    return cfg.federation_config(), mlp_spec, client_datasets, test


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    fed_cfg, mlp_spec, client_datasets, test = build_experiment(cfg)

    on_round = None
    if args.dump_diagnostics:
        diag_dir = os.path.join(cfg.out_dir, "diagnostics")

        def on_round(ctx):
            write_round_diagnostics(
                ctx.local_models, cfg.fedpake_config(), ctx.record.round, diag_dir
            )

    result = run_experiment(fed_cfg, mlp_spec, client_datasets, test, on_round=on_round)
    metrics_path = write_metrics(result, cfg.out_dir)
    model_path = os.path.join(cfg.out_dir, "final_model.txt")
    save_checkpoint(result.final_model, model_path)
    print(f"metrics: {metrics_path}")
    print(f"final model: {model_path}")
    print(f"final_accuracy: {FLOAT_FMT % result.final_accuracy}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    lambdas = cfg.sweep_lambda or (cfg.lambda_,)
    micros = cfg.sweep_micro_classes or (cfg.micro_classes,)
    macros = cfg.sweep_macro_classes or (cfg.macro_classes,)

    os.makedirs(cfg.out_dir, exist_ok=True)
    index_lines = ["name,lambda,micro_classes,macro_classes,final_accuracy,metrics_file"]
    for lam, c, s in itertools.product(lambdas, micros, macros):
        point = replace(cfg, lambda_=lam, micro_classes=c, macro_classes=s)
        name = f"lam{lam:g}_C{c}_S{s}"
        fed_cfg, mlp_spec, client_datasets, test = build_experiment(point)
        result = run_experiment(fed_cfg, mlp_spec, client_datasets, test)
        filename = f"metrics_{name}.csv"
        write_metrics(result, cfg.out_dir, filename=filename)
        index_lines.append(
            f"{name},{lam:g},{c},{s},{FLOAT_FMT % result.final_accuracy},{filename}"
        )
        print(f"{name}: final_accuracy {FLOAT_FMT % result.final_accuracy}")
    index_path = os.path.join(cfg.out_dir, "sweep_index.csv")
    with open(index_path, "w", encoding="ascii") as f:
        f.write("\n".join(index_lines) + "\n")
    print(f"sweep index: {index_path}")
    return 0


def cmd_inspect(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    if not 1 <= args.round <= cfg.rounds:
        raise ValueError(f"--round must be in [1, {cfg.rounds}]")
    cfg = replace(cfg, rounds=args.round, eval_tail=min(cfg.eval_tail, args.round))
    fed_cfg, mlp_spec, client_datasets, test = build_experiment(cfg)

    captured = {}

    def on_round(ctx):
        if ctx.record.round == args.round:
            captured["ctx"] = ctx

    run_experiment(fed_cfg, mlp_spec, client_datasets, test, on_round=on_round)
    ctx = captured["ctx"]
    path = write_round_diagnostics(
        ctx.local_models, cfg.fedpake_config(), args.round, cfg.out_dir
    )
    print(f"diagnostics: {path}")

    if args.hist_layer:
        start, _, stop = args.hist_positions.partition(":")
        hist_path = write_param_histogram(
            ctx.local_models,
            ctx.global_after,
            args.hist_layer,
            (int(start), int(stop)),
            args.hist_bins,
            cfg.out_dir,
        )
        print(f"histogram: {hist_path}")
    return 0


def cmd_eval_model(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    _, mlp_spec, _, test = build_experiment(cfg)
    params = load_checkpoint(args.model)
    state = init_mlp(mlp_spec).replaced(params)
    result = evaluate(state, test)
    print(f"accuracy: {FLOAT_FMT % result.accuracy}")
    print(f"mean_loss: {FLOAT_FMT % result.mean_loss}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedpake", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")

    p_run = sub.add_parser("run", help="run one experiment")
    common(p_run)
    p_run.add_argument(
        "--dump-diagnostics",
        action="store_true",
        help="write per-round aggregation diagnostics (large)",
    )
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid over lambda/micro/macro settings")
    common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_inspect = sub.add_parser("inspect", help="dump aggregation diagnostics for one round")
    common(p_inspect)
    p_inspect.add_argument("--round", type=int, default=1, help="round to inspect")
    p_inspect.add_argument("--hist-layer", default=None, help="layer name to histogram")
    p_inspect.add_argument(
        "--hist-positions", default="0:1", help="position range start:stop"
    )
    p_inspect.add_argument("--hist-bins", type=int, default=20, help="histogram bins")
    p_inspect.set_defaults(func=cmd_inspect)

    p_eval = sub.add_parser("eval-model", help="evaluate a model checkpoint")
    common(p_eval)
    p_eval.add_argument("--model", required=True, help="checkpoint file to import")
    p_eval.set_defaults(func=cmd_eval_model)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
