"""Averaging, retraining and enhanced retraining of class hypervectors.

All three keep a real-valued accumulator per class next to its binary view.
Retraining classifies each training sample with the binary view and, on a
mistake, moves the accumulators of the true and offending classes.
"""

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .classifier import ClassModel, evaluate
from .hv import pack_bits, sign_bits, words_to_bipolar
from .metrics import EpochRecord, RunMetrics


class NonBinaryClassModel:
    """Real-valued class accumulators plus their sign (the binary view).

    Zero accumulators keep whatever bit the binary view already had.
    """

    def __init__(self, counts, bits):
        self.counts = np.array(counts, dtype=np.float64)
        self.bits = np.array(bits, dtype=bool)
        if self.counts.shape != self.bits.shape or self.counts.ndim != 2:
            raise ValueError("counts and bits must be equal-shaped (K, D) arrays")
        self.words = pack_bits(self.bits)

    @property
    def n_classes(self):
        return self.counts.shape[0]

    @property
    def dim(self):
        return self.counts.shape[1]

    def rebinarize(self, rows=None):
        rows = np.arange(self.n_classes) if rows is None else np.atleast_1d(rows)
        self.bits[rows] = sign_bits(self.counts[rows], previous=self.bits[rows])
        self.words[rows] = pack_bits(self.bits[rows])

    def binary(self, metadata=None):
        return ClassModel(self.dim, self.words.copy(), dict(metadata or {}))

    def copy(self):
        return NonBinaryClassModel(self.counts, self.bits)


@dataclass
class RetrainConfig:
    alpha: float = 0.05
    alpha_first_epoch: float = 1.5
    max_epochs: int = 150
    patience: int = 5
    tolerance: float = 0.001
    seed: int = 0
    online: bool = True
    select: str = "best"
    shuffle: bool = True

    def __post_init__(self):
        if self.alpha <= 0 or self.alpha_first_epoch <= 0:
            raise ValueError("learning rates must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.select not in ("best", "last"):
            raise ValueError("select must be 'best' or 'last'")


def train_baseline(data, n_classes, seed=0):
    """Per-class majority of the sample hypervectors.

    Returns the binary model and the accumulators it was taken from.
    """
    sizes = np.bincount(data.labels, minlength=n_classes)
    if len(sizes) > n_classes:
        raise ValueError(f"labels exceed n_classes={n_classes}")
    for k in range(n_classes):
        if sizes[k] == 0:
            raise ValueError(f"class {k} has no training samples")
    ones = kernels.class_bit_counts(data.words, np.ascontiguousarray(data.labels), n_classes, data.dim)
    counts = 2 * ones - sizes[:, None]
    ties = np.random.default_rng(seed).integers(0, 2, size=counts.shape, dtype=np.uint8)
    nb = NonBinaryClassModel(counts, sign_bits(counts, tie_bits=ties))
    return nb.binary(), nb


def retrain_update(counts, x, true_class, wrong_class, alpha):
    """Add ``alpha * x`` to the true row and subtract it from the wrong row."""
    counts[true_class] += alpha * x
    counts[wrong_class] -= alpha * x
    return (true_class, wrong_class)


def enhanced_update(counts, x, distances, true_class, alpha, predicted=None):
    """Distance-scaled update of the true class and every closer wrong class.

    The true class moves by ``alpha * d_true`` (its ideal distance is 0) and
    each wrong class nearer than the true one moves away by
    ``alpha * max(0, 0.5 - d_k)`` (its ideal distance is 0.5). ``predicted``
    is always treated as offending so ties at ``d_true`` still get pushed.
    """
    d = np.asarray(distances, dtype=np.float64)
    d_true = d[true_class]
    wrong = np.flatnonzero(d < d_true)
    if predicted is not None and predicted != true_class and predicted not in wrong:
        wrong = np.append(wrong, predicted)
    counts[true_class] += alpha * d_true * x
    for k in wrong:
        counts[k] -= alpha * max(0.0, 0.5 - d[k]) * x
    return (true_class, *[int(k) for k in wrong])


def _converged(history, patience, tol_count):
    if len(history) <= patience:
        return False
    recent = np.diff(history[-(patience + 1):])
    return bool(np.all(np.abs(recent) <= tol_count))


def _run_retrain(data, model, cfg, enhanced, eval_data, metadata):
    nb = model.copy()
    dim = nb.dim
    rng = np.random.default_rng(cfg.seed)
    metrics = RunMetrics(
        "retrain-enhanced" if enhanced else "retrain",
        config=asdict(cfg), seeds={"shuffle": cfg.seed},
    )
    best_acc, best_words, best_epoch = -1.0, nb.words.copy(), 0
    history = []
    tol_count = cfg.tolerance * len(data)
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        alpha = cfg.alpha_first_epoch if epoch == 1 else cfg.alpha
        order = rng.permutation(len(data)) if cfg.shuffle else np.arange(len(data))
        view = nb.words if cfg.online else nb.words.copy()
        wrong_count = 0
        updates = 0
        for i in order:
            w = data.words[i:i + 1]
            m = kernels.xor_popcount(w, view)[0]
            pred = int(np.argmin(m))
            y = int(data.labels[i])
            if pred == y:
                continue
            wrong_count += 1
            x = words_to_bipolar(w[0], dim, dtype=np.float64)
            if enhanced:
                touched = enhanced_update(nb.counts, x, m / dim, y, alpha, predicted=pred)
            else:
                touched = retrain_update(nb.counts, x, y, pred, alpha)
            updates += len(touched)
            if cfg.online:
                nb.rebinarize(list(touched))
        if not cfg.online:
            nb.rebinarize()
        train_acc = evaluate(data, nb.binary()).accuracy
        val_acc = evaluate(eval_data, nb.binary()).accuracy if eval_data is not None else None
        metrics.add(EpochRecord(
            epoch=epoch, train_acc=train_acc, val_acc=val_acc, lr=alpha,
            wall_ms=(time.perf_counter() - t0) * 1e3,
            extra={"misclassified": wrong_count, "row_updates": updates},
        ))
        if train_acc > best_acc:
            best_acc, best_words, best_epoch = train_acc, nb.words.copy(), epoch
        history.append(wrong_count)
        if wrong_count == 0 or _converged(history, cfg.patience, tol_count):
            break
    if cfg.select == "best":
        metrics.best_epoch = best_epoch
        out = ClassModel(dim, best_words, dict(metadata or {}))
    else:
        metrics.best_epoch = len(metrics.epochs)
        out = nb.binary(metadata)
    return out, metrics, nb


def retrain(data, model, cfg=None, eval_data=None, metadata=None):
    """Fine-tune with the add/subtract rule; ``model`` comes from ``train_baseline``.

    Returns ``(ClassModel, RunMetrics, NonBinaryClassModel)``. ``eval_data``
    only feeds the per-epoch ``val_acc`` trajectory.
    """
    return _run_retrain(data, model, cfg or RetrainConfig(), False, eval_data, metadata)


def retrain_enhanced(data, model, cfg=None, eval_data=None, metadata=None):
    return _run_retrain(data, model, cfg or RetrainConfig(), True, eval_data, metadata)
