"""Pure numpy kernels; fallback for the compiled extension.

Both backends must produce bit-identical results: labels come from exact
float comparisons against the same bin boundaries, and disagreement
counts are integer arithmetic.
"""

import numpy as np

BACKEND = "numpy"


def bin_labels(values: np.ndarray, num_bins: int) -> np.ndarray:
    """Label each value v with the smallest i in 1..num_bins with v <= i/num_bins.

    Values normalized to [0, 1]; v = 0 lands in bin 1, values above 1 are
    clamped into the last bin.
    """
    values = np.asarray(values, dtype=np.float64)
    bounds = np.arange(1, num_bins + 1, dtype=np.float64) / num_bins
    labels = np.searchsorted(bounds, values, side="left") + 1
    return np.minimum(labels, num_bins).astype(np.int32)


def pairwise_disagreements(labels: np.ndarray) -> np.ndarray:
    """Count positions where two clients' label rows differ, for every pair."""
    labels = np.ascontiguousarray(labels, dtype=np.int32)
    k = labels.shape[0]
    out = np.zeros((k, k), dtype=np.int64)
    for a in range(k):
        diff = (labels[a + 1 :] != labels[a]).sum(axis=1)
        out[a, a + 1 :] = diff
        out[a + 1 :, a] = diff
    return out
