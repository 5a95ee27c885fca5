# cython: language_level=3
"""Compiled hot loops. Signatures mirror :mod:`binhdc._pykernels` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int8_t, int32_t, int64_t, intptr_t

cnp.import_array()


cdef extern from *:
    int popcount64 "__builtin_popcountll"(unsigned long long) nogil


def xor_popcount(const uint64_t[:, ::1] a, const uint64_t[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], k = b.shape[0], w = a.shape[1]
    if b.shape[1] != w:
        raise ValueError("word count mismatch: %d vs %d" % (w, b.shape[1]))
    out = np.empty((n, k), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef Py_ssize_t i, j, t
    cdef int64_t acc
    with nogil:
        for i in range(n):
            for j in range(k):
                acc = 0
                for t in range(w):
                    acc += popcount64(a[i, t] ^ b[j, t])
                o[i, j] = acc
    return out


def encode_counts(const intptr_t[:, ::1] levels,
                  const int8_t[:, ::1] positions,
                  const int8_t[:, ::1] values):
    cdef Py_ssize_t n = levels.shape[0], nf = levels.shape[1]
    cdef Py_ssize_t d = positions.shape[1], q = values.shape[0]
    if positions.shape[0] != nf:
        raise ValueError("feature count mismatch: %d vs %d" % (nf, positions.shape[0]))
    if values.shape[1] != d:
        raise ValueError("dimension mismatch: %d vs %d" % (d, values.shape[1]))
    out = np.zeros((n, d), dtype=np.int32)
    cdef int32_t[:, ::1] o = out
    cdef Py_ssize_t s, i, j
    cdef intptr_t lv
    cdef const int8_t* prow
    cdef const int8_t* vrow
    cdef int32_t* orow
    for s in range(n):
        for i in range(nf):
            lv = levels[s, i]
            if lv < 0 or lv >= q:
                raise ValueError("level index %d out of range [0, %d)" % (lv, q))
    with nogil:
        for s in range(n):
            orow = &o[s, 0]
            for i in range(nf):
                prow = &positions[i, 0]
                vrow = &values[levels[s, i], 0]
                for j in range(d):
                    orow[j] += prow[j] * vrow[j]
    return out


def class_bit_counts(const uint64_t[:, ::1] words,
                     const intptr_t[::1] labels,
                     Py_ssize_t n_classes,
                     Py_ssize_t dim):
    cdef Py_ssize_t n = words.shape[0], w = words.shape[1]
    if labels.shape[0] != n:
        raise ValueError("label count mismatch")
    if w * 64 < dim:
        raise ValueError("too few words for dimension %d" % dim)
    out = np.zeros((n_classes, dim), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef Py_ssize_t s, t, j, base, lim
    cdef intptr_t lab
    cdef uint64_t x
    for s in range(n):
        if labels[s] < 0 or labels[s] >= n_classes:
            raise ValueError("label %d out of range [0, %d)" % (labels[s], n_classes))
    with nogil:
        for s in range(n):
            lab = labels[s]
            for t in range(w):
                x = words[s, t]
                base = t * 64
                lim = dim - base
                if lim > 64:
                    lim = 64
                for j in range(lim):
                    o[lab, base + j] += <int64_t>((x >> j) & 1)
    return out
