"""Kernel backend selection.

Each kernel routes to its measured-fastest implementation: the compiled
extension wins where the work is rational arithmetic (cell backward, split
scan), while the cell forward stays on the NumPy reference because its cost
is transcendental-bound and NumPy's vectorized exp/tanh beat scalar libm
loops at every realistic batch size (see benchmarks/bench_kernels.py).
Set COOLGUARD_PURE=1 to force the reference everywhere (used by the
equivalence tests and the benchmark).
"""

from __future__ import annotations

import os

from . import _ref

if os.environ.get("COOLGUARD_PURE") == "1":
    _impl = _ref
    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _ref
        BACKEND = "pure"

lstm_cell_forward = _ref.lstm_cell_forward
lstm_cell_backward = _impl.lstm_cell_backward
best_split_scan = _impl.best_split_scan

__all__ = [
    "BACKEND",
    "lstm_cell_forward",
    "lstm_cell_backward",
    "best_split_scan",
    "_ref",
]
