# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot aggregation loops.

Semantics mirror _kernels_np exactly: bin labels use the same float64
boundary comparisons, disagreement counts are pure integer arithmetic,
so the two backends are bit-identical.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def bin_labels(values, int num_bins):
    """Label each value v with the smallest i in 1..num_bins with v <= i/num_bins."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    flat = arr.reshape(-1)
    out = np.empty(flat.shape[0], dtype=np.int32)
    bounds = np.arange(1, num_bins + 1, dtype=np.float64) / num_bins
    cdef double[::1] v = flat
    cdef double[::1] b = bounds
    cdef cnp.int32_t[::1] o = out
    cdef Py_ssize_t n = flat.shape[0]
    cdef Py_ssize_t idx
    cdef int i, label
    for idx in range(n):
        label = num_bins
        for i in range(num_bins):
            if v[idx] <= b[i]:
                label = i + 1
                break
        o[idx] = label
    return out.reshape(arr.shape)


def pairwise_disagreements(labels):
    """Count positions where two clients' label rows differ, for every pair."""
    lab = np.ascontiguousarray(labels, dtype=np.int32)
    cdef cnp.int32_t[:, ::1] e = lab
    cdef Py_ssize_t k = lab.shape[0]
    cdef Py_ssize_t m = lab.shape[1]
    out = np.zeros((k, k), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    cdef Py_ssize_t a, b, j
    cdef cnp.int64_t count
    for a in range(k):
        for b in range(a + 1, k):
            count = 0
            for j in range(m):
                if e[a, j] != e[b, j]:
                    count += 1
            o[a, b] = count
            o[b, a] = count
    return out
