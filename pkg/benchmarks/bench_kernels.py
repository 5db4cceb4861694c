#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

The aggregation hot spots are per-(client, position) bin labeling and the
pairwise label-disagreement count behind the client similarity matrix
(O(K^2 * M); at production layer sizes this dominates a round).  Also
times the full per-layer pipeline under each backend.

Usage: python benchmarks/bench_kernels.py [--clients 20] [--positions 500000]
"""

import argparse
import time

import numpy as np

from fedpake import _kernels_np

try:
    from fedpake import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernels(num_clients, num_positions, num_bins, rng):
    values = rng.uniform(0, 1, size=(num_clients, num_positions))
    labels = rng.integers(1, num_bins + 1, size=(num_clients, num_positions)).astype(
        np.int32
    )
    rows = []
    backends = [("numpy", _kernels_np)] + ([("compiled", _ckernels)] if _ckernels else [])
    for name, impl in backends:
        t_bin = timeit(lambda: impl.bin_labels(values, num_bins))
        t_dis = timeit(lambda: impl.pairwise_disagreements(labels))
        rows.append((name, t_bin, t_dis))
    if _ckernels is not None:
        same_bins = np.array_equal(
            _kernels_np.bin_labels(values, num_bins), _ckernels.bin_labels(values, num_bins)
        )
        same_dis = np.array_equal(
            _kernels_np.pairwise_disagreements(labels),
            _ckernels.pairwise_disagreements(labels),
        )
        assert same_bins and same_dis, "backends disagree"
    return rows


def bench_pipeline(num_clients, num_positions, rng):
    # Full per-layer aggregation under each backend via the env selector.
    import importlib
    import os

    from fedpake.aggregation import FedPakeConfig, parameter_division
    from fedpake.params import LayerMatrix

    # Weight-like values (means away from zero) so the dispersion split is
    # non-trivial; zero-centered noise puts nearly everything low-dispersion.
    data = rng.normal(loc=1.0, scale=0.1, size=(num_clients, num_positions))
    w = LayerMatrix(list(range(num_clients)), data)
    cfg = FedPakeConfig(lambda_=0.2, micro_classes=4, macro_classes=4)
    high_share = parameter_division(w, cfg.lambda_).num_high / num_positions
    print(f"high-dispersion share at lambda={cfg.lambda_}: {high_share:.1%}")

    rows = []
    for forced, name in ((None, "selected"), ("1", "numpy-forced")):
        if forced is None:
            os.environ.pop("FEDPAKE_NO_EXTENSION", None)
        else:
            os.environ["FEDPAKE_NO_EXTENSION"] = forced
        import fedpake.kernels
        import fedpake.aggregation

        importlib.reload(fedpake.kernels)
        importlib.reload(fedpake.aggregation)
        backend = fedpake.kernels.backend()
        t = timeit(lambda: fedpake.aggregation.aggregate_layer(w, cfg), repeats=3)
        rows.append((f"{name} ({backend})", t))
    os.environ.pop("FEDPAKE_NO_EXTENSION", None)
    importlib.reload(fedpake.kernels)
    importlib.reload(fedpake.aggregation)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--clients", type=int, default=20)
    parser.add_argument("--positions", type=int, default=500_000)
    parser.add_argument("--bins", type=int, default=4)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"kernels: K={args.clients} clients, M={args.positions} positions, C={args.bins}")
    rows = bench_kernels(args.clients, args.positions, args.bins, rng)
    print(f"{'backend':<10} {'bin_labels':>12} {'disagreements':>14}")
    for name, t_bin, t_dis in rows:
        print(f"{name:<10} {t_bin * 1e3:>10.1f}ms {t_dis * 1e3:>12.1f}ms")
    if len(rows) == 2:
        print(
            f"speedup    {rows[0][1] / rows[1][1]:>11.1f}x {rows[0][2] / rows[1][2]:>13.1f}x"
        )

    print()
    print("full per-layer aggregation:")
    for name, t in bench_pipeline(args.clients, args.positions, rng):
        print(f"{name:<24} {t * 1e3:>8.1f}ms")


if __name__ == "__main__":
    main()
