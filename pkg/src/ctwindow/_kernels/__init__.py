"""Kernel backend selection and array-shaped wrappers.

The compiled Cython extension (`_core`) is preferred; the pure-NumPy
module (`_numpy`) is a drop-in replacement selected automatically when the
extension is not built. Set ``CTWINDOW_KERNELS=python`` to force the
fallback or ``CTWINDOW_KERNELS=cython`` to require the extension.
Both backends return bit-identical results; ``benchmarks/bench_kernels.py``
compares their throughput.
"""

import os

import numpy as np

_requested = os.environ.get("CTWINDOW_KERNELS", "auto").strip().lower()
if _requested in ("auto", "", "cython"):
    try:
        from . import _core as _backend
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from . import _numpy as _backend
        BACKEND = "numpy"
elif _requested in ("python", "numpy"):
    from . import _numpy as _backend
    BACKEND = "numpy"
else:
    raise ValueError(f"unknown CTWINDOW_KERNELS value: {_requested!r}")

TIE_BREAK_MODES = {"lowest_id": 0, "nearest_center": 1}


def window_normalize(values, lo, hi, out=None):
    """Map values through the band [lo, hi] onto [0, 255] (float32)."""
    src = np.ascontiguousarray(values, dtype=np.float32)
    if out is None:
        out = np.empty_like(src)
    _backend.window_normalize(src.reshape(-1), np.float32(lo), np.float32(hi),
                              out.reshape(-1))
    return out


def classify_bands(values, lo, hi, center, labels, tie_break="lowest_id"):
    """Label each value by intensity-band membership; 0 where no band matches."""
    mode = TIE_BREAK_MODES[tie_break]
    src = np.ascontiguousarray(values, dtype=np.float32)
    out = np.zeros(src.shape, dtype=np.uint8)
    _backend.classify_bands(
        src.reshape(-1),
        np.ascontiguousarray(lo, dtype=np.float32),
        np.ascontiguousarray(hi, dtype=np.float32),
        np.ascontiguousarray(center, dtype=np.float32),
        np.ascontiguousarray(labels, dtype=np.uint8),
        mode,
        out.reshape(-1),
    )
    return out


def label_overlap_counts(a, b):
    """Counts per uint8 label id: (|a==k|, |b==k|, |a==k & b==k|), shape (3, 256)."""
    a = np.ascontiguousarray(a, dtype=np.uint8)
    b = np.ascontiguousarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    counts = np.zeros((3, 256), dtype=np.int64)
    _backend.label_overlap_counts(a.reshape(-1), b.reshape(-1), counts)
    return counts
