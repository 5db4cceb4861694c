"""Metrics CSV, parameter histograms, and aggregation diagnostics dumps.

The metrics CSV has the fixed header
``round,mean_train_loss,test_accuracy,sd_mean,sd_max,sd_min,participants``,
one row per round with floats printed to 17 significant digits (lossless
for float64), participants as ids joined by ';', and a trailing
``final_accuracy,<value>`` summary line.
"""

from __future__ import annotations

import os

import numpy as np

from fedpake.aggregation import FedPakeConfig, LayerAggregation, analyze_layer
from fedpake.federation import ExperimentResult, RoundRecord
from fedpake.params import FLOAT_FMT, ModelParams, layer_matrix

METRICS_HEADER = "round,mean_train_loss,test_accuracy,sd_mean,sd_max,sd_min,participants"


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def write_metrics(result: ExperimentResult, out_dir, filename: str = "metrics.csv") -> str:
    """Write the per-round metrics CSV; returns the file path."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, filename)
    lines = [METRICS_HEADER]
    for r in result.records:
        lines.append(
            ",".join(
                [
                    str(r.round),
                    _fmt(r.mean_train_loss),
                    _fmt(r.test_accuracy),
                    _fmt(r.sd_mean),
                    _fmt(r.sd_max),
                    _fmt(r.sd_min),
                    ";".join(str(c) for c in r.participating),
                ]
            )
        )
    lines.append(f"final_accuracy,{_fmt(result.final_accuracy)}")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")
    return path


def read_metrics(path) -> tuple[list[RoundRecord], float]:
    """Parse a metrics CSV back into round records plus the final accuracy."""
    records: list[RoundRecord] = []
    final_accuracy = None
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().strip()
        if header != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected header '{header}'")
        for raw in f:
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if parts[0] == "final_accuracy":
                final_accuracy = float(parts[1])
                continue
            if len(parts) != 7:
                raise ValueError(f"{path}: malformed row '{line}'")
            records.append(
                RoundRecord(
                    round=int(parts[0]),
                    mean_train_loss=float(parts[1]),
                    test_accuracy=float(parts[2]),
                    sd_mean=float(parts[3]),
                    sd_max=float(parts[4]),
                    sd_min=float(parts[5]),
                    participating=[int(c) for c in parts[6].split(";") if c],
                )
            )
    if final_accuracy is None:
        raise ValueError(f"{path}: missing final_accuracy summary line")
    return records, final_accuracy


def write_param_histogram(
    models: list[ModelParams],
    global_model: ModelParams,
    layer_name: str,
    positions: tuple[int, int],
    bins: int,
    out_dir,
    filename: str = "param_hist.csv",
) -> str:
    """Histogram client values at selected positions of one layer, with the
    global model's value per position for overlay.  Returns the file path."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    names = global_model.layer_names()
    if layer_name not in names:
        raise ValueError(f"no layer named '{layer_name}' (have {names})")
    li = names.index(layer_name)
    size = global_model.layers[li].size
    start, stop = positions
    if not (0 <= start < stop <= size):
        raise ValueError(
            f"position range [{start}, {stop}) out of bounds for layer "
            f"'{layer_name}' of size {size}"
        )
    w = layer_matrix(models, li)
    global_values = global_model.layers[li].values

    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, filename)
    lines = ["layer,position,bin_index,bin_lo,bin_hi,count,global_value"]
    for pos in range(start, stop):
        column = w.data[:, pos]
        counts, edges = np.histogram(column, bins=bins)
        for b in range(bins):
            lines.append(
                ",".join(
                    [
                        layer_name,
                        str(pos),
                        str(b),
                        _fmt(edges[b]),
                        _fmt(edges[b + 1]),
                        str(int(counts[b])),
                        _fmt(global_values[pos]),
                    ]
                )
            )
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")
    return path


def _mask_line(mask) -> str:
    return "".join("1" if h else "0" for h in mask)


def format_layer_diagnostics(name: str, diag: LayerAggregation) -> str:
    """Human-readable dump of one layer's aggregation trace."""
    out = [f"layer {name}"]
    out.append(f"  clients {' '.join(str(c) for c in diag.clients)}")
    out.append(f"  high_mask {_mask_line(diag.mask.high)}")
    out.append(f"  low_mask {_mask_line(diag.mask.low)}")
    if diag.labels is None:
        out.append("  note all positions low-dispersion; aggregate is the plain mean")
        return "\n".join(out) + "\n"
    for client, row in zip(diag.clients, diag.labels):
        out.append(f"  micro_class client={client} " + " ".join(str(v) for v in row))
    for i, row in enumerate(diag.similarity):
        out.append(
            f"  similarity row={diag.clients[i]} " + " ".join(_fmt(v) for v in row)
        )
    for j, cluster in enumerate(diag.macro.clusters):
        out.append(f"  cluster {j} members " + " ".join(str(c) for c in cluster))
        out.append(
            f"  tendency {j} " + " ".join(str(v) for v in diag.macro.tendencies[j])
        )
        out.append(
            f"  weights {j} " + " ".join(_fmt(v) for v in diag.macro.weights[j])
        )
    out.append("  aggregate " + " ".join(_fmt(v) for v in diag.aggregate))
    return "\n".join(out) + "\n"


def write_round_diagnostics(
    local_models: list[ModelParams],
    cfg: FedPakeConfig,
    round_idx: int,
    out_dir,
) -> str:
    """Dump {mask, bin labels, similarity, clusters, tendencies, weights} per layer."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"diagnostics_round_{round_idx:05d}.txt")
    template = local_models[0]
    chunks = [f"# aggregation diagnostics, round {round_idx}\n"]
    for li, tensor in enumerate(template.layers):
        w = layer_matrix(local_models, li)
        diag = analyze_layer(w, cfg)
        sd = (w.data - w.data.mean(axis=0)) ** 2
        chunks.append(format_layer_diagnostics(tensor.name, diag))
        chunks.append(
            f"  sd_stats mean={_fmt(sd.mean())} max={_fmt(sd.max())} min={_fmt(sd.min())}\n"
        )
    with open(path, "w", encoding="ascii") as f:
        f.write("".join(chunks))
    return path
