"""Class-hypervector models and nearest-class inference."""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .hv import Hypervector, n_words, pack_bits, unpack_bits, words_to_bipolar


@dataclass
class ClassModel:
    dim: int
    class_words: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.class_words = np.ascontiguousarray(self.class_words, dtype=np.uint64)
        if self.class_words.ndim != 2 or self.class_words.shape[1] != n_words(self.dim):
            raise ValueError(f"class_words must have shape (K, {n_words(self.dim)})")
        if self.class_words.shape[0] < 2:
            raise ValueError("a model needs at least 2 classes")

    @property
    def n_classes(self):
        return self.class_words.shape[0]

    @property
    def class_hvs(self):
        return [Hypervector(self.dim, w) for w in self.class_words]

    @classmethod
    def from_hvs(cls, hvs, metadata=None):
        hvs = list(hvs)
        dims = {h.dim for h in hvs}
        if len(dims) != 1:
            raise ValueError(f"class hypervectors disagree on dim: {sorted(dims)}")
        return cls(dims.pop(), np.stack([h.words for h in hvs]), dict(metadata or {}))

    @classmethod
    def from_bits(cls, bits, metadata=None):
        bits = np.asarray(bits, dtype=bool)
        return cls(bits.shape[1], pack_bits(bits), dict(metadata or {}))

    def bits(self):
        return unpack_bits(self.class_words, self.dim)

    def bipolar(self, dtype=np.int8):
        return words_to_bipolar(self.class_words, self.dim, dtype=dtype)


@dataclass(frozen=True)
class Prediction:
    """``distances`` are normalized; ``scores`` are the bipolar dot products."""

    label: int
    mismatches: np.ndarray
    dim: int

    @property
    def distances(self):
        return self.mismatches / self.dim

    @property
    def scores(self):
        return self.dim - 2 * self.mismatches


def mismatch_matrix(words, model):
    """Differing-bit counts of each query row against each class, ``(L, K)``."""
    words = np.ascontiguousarray(words, dtype=np.uint64)
    if words.ndim == 1:
        words = words[None, :]
    if words.shape[1] != model.class_words.shape[1]:
        raise ValueError("query and model word counts differ")
    return kernels.xor_popcount(words, model.class_words)


def predict(hv, model):
    if hv.dim != model.dim:
        raise ValueError(f"dimension mismatch: query {hv.dim} vs model {model.dim}")
    m = mismatch_matrix(hv.words, model)[0]
    # argmin returns the first minimum, i.e. the lowest class index on ties
    return Prediction(int(np.argmin(m)), m, model.dim)


def predict_labels(words, model):
    return np.argmin(mismatch_matrix(words, model), axis=1)


@dataclass
class Evaluation:
    accuracy: float
    confusion: np.ndarray

    @property
    def correct(self):
        return int(np.trace(self.confusion))

    @property
    def total(self):
        return int(self.confusion.sum())


def evaluate(dataset, model):
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if dataset.dim != model.dim:
        raise ValueError(f"dimension mismatch: data {dataset.dim} vs model {model.dim}")
    k = model.n_classes
    if dataset.labels.min() < 0 or dataset.labels.max() >= k:
        raise ValueError(f"dataset labels fall outside [0, {k})")
    pred = predict_labels(dataset.words, model)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (dataset.labels, pred), 1)
    return Evaluation(float(np.trace(confusion)) / len(dataset), confusion)
