"""Bit-packed bipolar hypervectors.

A hypervector of dimension ``D`` lives in ``ceil(D / 64)`` little-endian
uint64 words. Element ``i`` is bit ``i % 64`` of word ``i // 64``; a set bit
stands for +1 and a clear bit for -1. Padding bits past ``D`` are always 0, so
popcounts over whole words are exact.

Binding is XNOR (the bipolar product), which makes the all-ones pattern the
identity element.
"""

from fractions import Fraction

import numpy as np

from . import kernels

WORD_BITS = 64


def n_words(dim):
    return -(-dim // WORD_BITS)


def as_rng(rng):
    """Accept a Generator or anything ``np.random.default_rng`` takes."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def pad_mask(dim):
    """Mask of the valid bits in the final word."""
    r = dim % WORD_BITS
    return np.uint64(0xFFFFFFFFFFFFFFFF) if r == 0 else np.uint64((1 << r) - 1)


def pack_bits(bits):
    """Pack a ``(..., D)`` boolean array into ``(..., W)`` uint64 words."""
    bits = np.asarray(bits, dtype=bool)
    dim = bits.shape[-1]
    w = n_words(dim)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    pad = w * 8 - packed.shape[-1]
    if pad:
        widths = [(0, 0)] * (packed.ndim - 1) + [(0, pad)]
        packed = np.pad(packed, widths)
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_bits(words, dim):
    """Inverse of :func:`pack_bits`."""
    words = np.ascontiguousarray(words, dtype=np.uint64)
    raw = words.astype("<u8", copy=False).view(np.uint8)
    return np.unpackbits(raw, axis=-1, bitorder="little")[..., :dim].astype(bool)


def words_to_bipolar(words, dim, dtype=np.int8):
    bits = unpack_bits(words, dim)
    return (bits.astype(dtype) * 2 - 1).astype(dtype, copy=False)


def sign_bits(counts, tie_bits=None, previous=None):
    """Sign of ``counts`` as a boolean array.

    Zeros take ``tie_bits`` when given, else ``previous`` when given, else +1.
    """
    counts = np.asarray(counts)
    out = counts > 0
    zero = counts == 0
    if tie_bits is not None:
        out |= zero & np.asarray(tie_bits, dtype=bool)
    elif previous is not None:
        out |= zero & np.asarray(previous, dtype=bool)
    else:
        out |= zero
    return out


class Hypervector:
    """Immutable bipolar vector in {-1, +1}^dim."""

    __slots__ = ("_dim", "_words")

    def __init__(self, dim, words):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        words = np.array(words, dtype=np.uint64).reshape(-1)
        if words.shape[0] != n_words(dim):
            raise ValueError(f"expected {n_words(dim)} words for dim {dim}, got {words.shape[0]}")
        if words[-1] & ~pad_mask(dim):
            raise ValueError("padding bits beyond dim must be zero")
        words.setflags(write=False)
        self._dim = int(dim)
        self._words = words

    @property
    def dim(self):
        return self._dim

    @property
    def words(self):
        return self._words

    @classmethod
    def from_bits(cls, bits):
        bits = np.asarray(bits, dtype=bool).reshape(-1)
        return cls(bits.shape[0], pack_bits(bits))

    @classmethod
    def from_bipolar(cls, values):
        values = np.asarray(values).reshape(-1)
        if not np.all(np.abs(values) == 1):
            raise ValueError("bipolar values must be +1 or -1")
        return cls.from_bits(values > 0)

    @classmethod
    def ones(cls, dim):
        return cls.from_bits(np.ones(dim, dtype=bool))

    def bits(self):
        return unpack_bits(self._words, self._dim)

    def bipolar(self):
        return words_to_bipolar(self._words, self._dim)

    def complement(self):
        w = ~self._words
        w[-1] &= pad_mask(self._dim)
        return Hypervector(self._dim, w)

    def __eq__(self, other):
        if not isinstance(other, Hypervector):
            return NotImplemented
        return self._dim == other._dim and np.array_equal(self._words, other._words)

    def __hash__(self):
        return hash((self._dim, self._words.tobytes()))

    def __len__(self):
        return self._dim

    def __repr__(self):
        return f"Hypervector(dim={self._dim}, ones={int(self.bits().sum())})"


class Accumulator:
    """Element-wise running sum of bipolar vectors."""

    __slots__ = ("dim", "counts", "n")

    def __init__(self, dim, counts=None):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        if counts is None:
            self.counts = np.zeros(dim, dtype=np.int64)
        else:
            self.counts = np.array(counts, dtype=np.int64).reshape(-1)
            if self.counts.shape[0] != dim:
                raise ValueError(f"counts length {self.counts.shape[0]} != dim {dim}")
        self.n = 0


def _check_dims(a, b):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def random_hv(dim, rng):
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    rng = as_rng(rng)
    return Hypervector.from_bits(rng.integers(0, 2, size=dim, dtype=np.uint8))


def hamming_count(a, b):
    _check_dims(a, b)
    return int(kernels.xor_popcount(a.words[None, :], b.words[None, :])[0, 0])


def hamming(a, b):
    """Normalized Hamming distance as an exact ``Fraction``."""
    return Fraction(hamming_count(a, b), a.dim)


def cosine_from_hamming(h):
    if not 0 <= h <= 1:
        raise ValueError(f"hamming distance must lie in [0, 1], got {h}")
    return 1 - 2 * h


def bipolar_dot(a, b):
    _check_dims(a, b)
    return a.dim - 2 * hamming_count(a, b)


def bind(a, b):
    _check_dims(a, b)
    w = ~(a.words ^ b.words)
    w[-1] &= pad_mask(a.dim)
    return Hypervector(a.dim, w)


def accumulate(acc, hv):
    """Add ``hv`` (as +/-1) into ``acc`` in place and return it."""
    _check_dims(acc, hv)
    acc.counts += hv.bipolar()
    acc.n += 1
    return acc


def binarize_sign(acc, rng):
    """Sign of the accumulator; zero counts take a random bit from ``rng``.

    A full ``dim`` worth of tie bits is always drawn so the stream position
    after the call does not depend on how many ties there were.
    """
    ties = as_rng(rng).integers(0, 2, size=acc.dim, dtype=np.uint8)
    return Hypervector.from_bits(sign_bits(acc.counts, tie_bits=ties))
