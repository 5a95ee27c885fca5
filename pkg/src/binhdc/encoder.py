"""Item memories and record-based encoding.

A sample with features ``f_1..f_N`` is encoded as
``sign(sum_i P_i * V[q(f_i)])`` where ``P_i`` are random position vectors,
``V`` is a chain of correlated level vectors and ``q`` quantizes each feature
by min-max binning. Zero sums are broken by a per-sample random stream.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .hv import Hypervector, as_rng, n_words, pack_bits, sign_bits, unpack_bits, words_to_bipolar

DEFAULT_CHUNK = 256


@dataclass(frozen=True)
class FeatureStats:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64).reshape(-1)
        maxs = np.asarray(self.maxs, dtype=np.float64).reshape(-1)
        if mins.shape != maxs.shape or mins.size == 0:
            raise ValueError("mins and maxs must be nonempty and of equal length")
        if np.any(mins > maxs):
            raise ValueError("min exceeds max for some feature")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def n_features(self):
        return self.mins.shape[0]


def _features_and_labels(dataset):
    if hasattr(dataset, "features"):
        return dataset.features, getattr(dataset, "labels", None)
    if isinstance(dataset, tuple) and len(dataset) == 2:
        return dataset
    return dataset, None


def fit_stats(dataset):
    """Per-feature min/max over the training features.

    Accepts a feature matrix, a ``(features, labels)`` pair, a sequence of
    ``(features, label)`` records or anything with a ``features`` attribute.
    """
    feats, _ = _features_and_labels(dataset)
    if isinstance(feats, (list, tuple)) and feats and isinstance(feats[0], tuple):
        feats = [row[0] for row in feats]
    if len(feats) == 0:
        raise ValueError("cannot fit stats on an empty dataset")
    lengths = {len(row) for row in feats}
    if len(lengths) != 1:
        raise ValueError(f"inconsistent feature counts: {sorted(lengths)}")
    x = np.asarray(feats, dtype=np.float64)
    if x.shape[1] == 0:
        raise ValueError("samples have no features")
    return FeatureStats(x.min(axis=0), x.max(axis=0))


@dataclass
class ItemMemory:
    dim: int
    n_levels: int
    position_words: np.ndarray
    level_words: np.ndarray
    stats: FeatureStats
    seed: int
    _tables: tuple = field(default=None, repr=False, compare=False)

    @property
    def n_features(self):
        return self.position_words.shape[0]

    @property
    def position_hvs(self):
        return [Hypervector(self.dim, w) for w in self.position_words]

    @property
    def level_hvs(self):
        return [Hypervector(self.dim, w) for w in self.level_words]

    def bipolar_tables(self):
        """Cached int8 (+/-1) copies of the position and level vectors."""
        if self._tables is None:
            self._tables = (
                np.ascontiguousarray(words_to_bipolar(self.position_words, self.dim)),
                np.ascontiguousarray(words_to_bipolar(self.level_words, self.dim)),
            )
        return self._tables


def level_flip_chunks(dim, n_levels, rng):
    """Split a random half of the positions into ``n_levels - 1`` chunks.

    Chunk ``j`` ends at ``round(j * dim / (2 * (n_levels - 1)))``, so the
    flips between any two levels are within one position of proportional.
    """
    steps = n_levels - 1
    bounds = np.floor(np.arange(steps + 1) * dim / (2 * steps) + 0.5).astype(np.intp)
    half = rng.permutation(dim)[: bounds[-1]]
    return [half[bounds[j]:bounds[j + 1]] for j in range(steps)]


def build_item_memory(dim, n_features, n_levels, stats, seed):
    if n_levels < 2:
        raise ValueError(f"n_levels must be >= 2, got {n_levels}")
    if dim < n_levels:
        raise ValueError(f"dim ({dim}) must be >= n_levels ({n_levels})")
    if n_features < 1:
        raise ValueError(f"n_features must be >= 1, got {n_features}")
    if stats.n_features != n_features:
        raise ValueError(f"stats cover {stats.n_features} features, expected {n_features}")
    rng = np.random.default_rng(seed)
    positions = rng.integers(0, 2, size=(n_features, dim), dtype=np.uint8).astype(bool)
    level = rng.integers(0, 2, size=dim, dtype=np.uint8).astype(bool)
    chunks = level_flip_chunks(dim, n_levels, rng)
    levels = np.empty((n_levels, dim), dtype=bool)
    levels[0] = level
    for i, chunk in enumerate(chunks):
        level = level.copy()
        level[chunk] = ~level[chunk]
        levels[i + 1] = level
    return ItemMemory(
        dim=int(dim),
        n_levels=int(n_levels),
        position_words=pack_bits(positions),
        level_words=pack_bits(levels),
        stats=stats,
        seed=int(seed),
    )


def quantize_matrix(features, stats, n_levels):
    """Vectorized min-max binning of a ``(L, N)`` matrix into level indices."""
    x = np.asarray(features, dtype=np.float64)
    span = stats.maxs - stats.mins
    safe = np.where(span > 0, span, 1.0)
    q = np.floor((x - stats.mins) / safe * n_levels)
    q = np.where(span > 0, q, 0.0)
    q = np.nan_to_num(q, nan=0.0, posinf=n_levels - 1, neginf=0)
    return np.clip(q, 0, n_levels - 1).astype(np.intp)


def quantize(value, feature_index, im):
    lo = im.stats.mins[feature_index]
    hi = im.stats.maxs[feature_index]
    if hi == lo:
        return 0
    q = int(np.floor((value - lo) / (hi - lo) * im.n_levels))
    return min(max(q, 0), im.n_levels - 1)


def _check_features(features, im):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != im.n_features:
        raise ValueError(f"expected {im.n_features} features, got {x.shape[1]}")
    return x


def encode_counts(features, im):
    """Pre-sign sums for a batch of samples, shape ``(L, D)``."""
    x = _check_features(features, im)
    levels = np.ascontiguousarray(quantize_matrix(x, im.stats, im.n_levels))
    pos, lvl = im.bipolar_tables()
    return kernels.encode_counts(levels, pos, lvl)


def sample_rng(seed, sample_id):
    return np.random.default_rng([int(seed), int(sample_id)])


def _tie_bits(rng, dim):
    return as_rng(rng).integers(0, 2, size=dim, dtype=np.uint8)


def encode(features, im, tie_rng):
    counts = encode_counts(features, im)[0]
    bits = sign_bits(counts, tie_bits=_tie_bits(tie_rng, im.dim))
    return Hypervector.from_bits(bits)


@dataclass
class EncodedDataset:
    dim: int
    words: np.ndarray
    labels: np.ndarray
    n_classes: int = None

    def __post_init__(self):
        self.words = np.ascontiguousarray(self.words, dtype=np.uint64).reshape(-1, n_words(self.dim))
        self.labels = np.asarray(self.labels, dtype=np.intp).reshape(-1)
        if self.labels.shape[0] != self.words.shape[0]:
            raise ValueError("words and labels differ in length")
        if self.n_classes is None:
            self.n_classes = int(self.labels.max()) + 1 if len(self.labels) else 0
        elif len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self):
        return self.words.shape[0]

    def hv(self, i):
        return Hypervector(self.dim, self.words[i])

    def bits(self):
        return unpack_bits(self.words, self.dim)

    def bipolar(self, dtype=np.int8):
        return words_to_bipolar(self.words, self.dim, dtype=dtype)

    def subset(self, index):
        return EncodedDataset(self.dim, self.words[index], self.labels[index], self.n_classes)


def _encode_chunk(x, ids, im, seed):
    counts = encode_counts(x, im)
    bits = counts > 0
    for r in np.flatnonzero((counts == 0).any(axis=1)):
        ties = _tie_bits(sample_rng(seed, ids[r]), im.dim)
        bits[r] = sign_bits(counts[r], tie_bits=ties)
    return pack_bits(bits)


def encode_dataset(dataset, im, seed, n_jobs=1, sample_ids=None, n_classes=None,
                   chunk_size=DEFAULT_CHUNK):
    """Encode every sample; sample ``i`` breaks ties with ``sample_rng(seed, id_i)``.

    ``sample_ids`` defaults to ``0..L-1``. Passing the original row numbers
    after a permutation reproduces the unpermuted hypervectors, and the output
    does not depend on ``n_jobs``.
    """
    feats, labels = _features_and_labels(dataset)
    x = np.asarray(feats, dtype=np.float64)
    if x.size == 0:
        return EncodedDataset(im.dim, np.zeros((0, n_words(im.dim)), np.uint64),
                              np.zeros(0, np.intp), n_classes)
    x = _check_features(x, im)
    if labels is None:
        labels = np.zeros(x.shape[0], dtype=np.intp)
    ids = np.arange(x.shape[0]) if sample_ids is None else np.asarray(sample_ids)
    if ids.shape[0] != x.shape[0]:
        raise ValueError("sample_ids length differs from the number of samples")
    im.bipolar_tables()
    starts = range(0, x.shape[0], chunk_size)
    work = [(x[s:s + chunk_size], ids[s:s + chunk_size]) for s in starts]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda a: _encode_chunk(a[0], a[1], im, seed), work))
    else:
        parts = [_encode_chunk(xa, ia, im, seed) for xa, ia in work]
    return EncodedDataset(im.dim, np.concatenate(parts), labels, n_classes)
