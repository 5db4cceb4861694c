"""Kernel backend selection.

Imports the compiled extension when available, otherwise the numpy
fallback.  FEDPAKE_NO_EXTENSION=1 forces the fallback.  Both backends
are bit-identical; only speed differs (see benchmarks/bench_kernels.py).
"""

import os

if os.environ.get("FEDPAKE_NO_EXTENSION"):
    from fedpake import _kernels_np as _impl
else:
    try:
        from fedpake import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from fedpake import _kernels_np as _impl

bin_labels = _impl.bin_labels
pairwise_disagreements = _impl.pairwise_disagreements


def backend() -> str:
    """Name of the active kernel backend: 'compiled' or 'numpy'."""
    return _impl.BACKEND
