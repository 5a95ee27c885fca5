"""Backend selection for the bit-level kernels.

The compiled extension is used when it imports; otherwise the NumPy fallback.
Set ``BINHDC_KERNELS=python`` to force the fallback.

Kernels
-------
xor_popcount(a, b)
    ``(n, w)`` and ``(k, w)`` uint64 word matrices -> ``(n, k)`` int64 count of
    differing bits.
encode_counts(levels, positions, values)
    ``(n, f)`` level indices, ``(f, d)`` and ``(q, d)`` bipolar int8 tables ->
    ``(n, d)`` int32 sums of bound position/value elements.
class_bit_counts(words, labels, n_classes, dim)
    per-class count of set bits at each of ``dim`` positions.
"""

import os

from . import _pykernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

if compiled_backend is not None and os.environ.get("BINHDC_KERNELS", "").lower() != "python":
    backend = compiled_backend
    BACKEND_NAME = "compiled"
else:
    backend = python_backend
    BACKEND_NAME = "python"


def available_backends():
    out = {"python": python_backend}
    if compiled_backend is not None:
        out["compiled"] = compiled_backend
    return out


def xor_popcount(a, b):
    return backend.xor_popcount(a, b)


def encode_counts(levels, positions, values):
    return backend.encode_counts(levels, positions, values)


def class_bit_counts(words, labels, n_classes, dim):
    return backend.class_bit_counts(words, labels, n_classes, dim)
