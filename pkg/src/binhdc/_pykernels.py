"""NumPy implementations of the hot loops, used when the extension is unavailable."""

import numpy as np

if hasattr(np, "bitwise_count"):
    def _popcount(x):
        return np.bitwise_count(x)
else:  # numpy < 2.0
    _BYTE_POP = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)

    def _popcount(x):
        b = np.ascontiguousarray(x).view(np.uint8).reshape(x.shape + (8,))
        return _BYTE_POP[b].sum(axis=-1, dtype=np.int64)


def xor_popcount(a, b):
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if a.shape[1] != b.shape[1]:
        raise ValueError("word count mismatch: %d vs %d" % (a.shape[1], b.shape[1]))
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.int64)
    # row-at-a-time keeps the temporary at K x W
    for i in range(a.shape[0]):
        out[i] = _popcount(a[i] ^ b).sum(axis=1, dtype=np.int64)
    return out


def encode_counts(levels, positions, values):
    levels = np.asarray(levels, dtype=np.intp)
    nf = levels.shape[1]
    if positions.shape[0] != nf:
        raise ValueError("feature count mismatch: %d vs %d" % (nf, positions.shape[0]))
    if values.shape[1] != positions.shape[1]:
        raise ValueError("dimension mismatch: %d vs %d" % (positions.shape[1], values.shape[1]))
    if levels.size and (levels.min() < 0 or levels.max() >= values.shape[0]):
        raise ValueError("level index out of range [0, %d)" % values.shape[0])
    out = np.zeros((levels.shape[0], positions.shape[1]), dtype=np.int32)
    for i in range(nf):
        out += positions[i] * values[levels[:, i]]
    return out


def class_bit_counts(words, labels, n_classes, dim):
    words = np.asarray(words, dtype=np.uint64)
    labels = np.asarray(labels, dtype=np.intp)
    if labels.shape[0] != words.shape[0]:
        raise ValueError("label count mismatch")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError("label out of range [0, %d)" % n_classes)
    out = np.zeros((n_classes, dim), dtype=np.int64)
    for k in range(n_classes):
        sel = words[labels == k]
        if len(sel):
            bits = np.unpackbits(sel.astype("<u8").view(np.uint8), axis=1, bitorder="little")
            out[k] = bits[:, :dim].sum(axis=0, dtype=np.int64)
    return out
