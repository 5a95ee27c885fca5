"""Learning the class hypervectors as a wide single-layer binary network.

The network input is the bipolar sample hypervector, the weights are the
class hypervectors ``C = sign(C_nb)`` and the K outputs are the dot products
``x @ C`` with no activation. Training uses softmax cross-entropy plus an L2
penalty on the latent weights ``C_nb``, inverted dropout on the input
dimensions, Adam, and a straight-through estimator for the sign.
"""

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .classifier import ClassModel, evaluate
from .data_io import split_indices
from .hv import pack_bits
from .metrics import EpochRecord, RunMetrics

CLIP = 1.0


@dataclass
class LeHDCConfig:
    weight_decay: float = 0.05
    learning_rate: float = 0.01
    batch_size: int = 64
    dropout_rate: float = 0.5
    epochs: int = 100
    lr_decay_factor: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_fraction: float = 0.1
    seed: int = 0
    init: str = "warm"

    def __post_init__(self):
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.lr_decay_factor <= 1:
            raise ValueError("lr_decay_factor must lie in (0, 1]")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.init not in ("warm", "cold"):
            raise ValueError("init must be 'warm' or 'cold'")


class LatentWeights:
    """Real ``(D, K)`` weights and their binary view, refreshed on demand."""

    def __init__(self, latent):
        self.latent = np.array(latent, dtype=np.float64)
        self.refresh()

    def refresh(self):
        self.binary = binarize(self.latent)

    def model(self, metadata=None):
        return ClassModel(self.latent.shape[0], pack_bits(self.binary.T > 0), dict(metadata or {}))


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape), 0)


def binarize(latent):
    """-1 where negative, +1 otherwise (zero maps to +1)."""
    return np.where(np.asarray(latent) < 0, -1.0, 1.0)


def dropout_mask(dim, rate, rng):
    """Inverted-dropout mask over input dimensions: values in {0, 1/(1-rate)}."""
    if rate == 0:
        return np.ones(dim)
    keep = rng.random(dim) >= rate
    return keep / (1.0 - rate)


def _check_shapes(batch, weights, mask):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != weights.shape[0]:
        raise ValueError(f"batch shape {batch.shape} incompatible with weights {weights.shape}")
    if mask is not None and np.shape(mask) != (weights.shape[0],):
        raise ValueError(f"mask must have shape ({weights.shape[0]},)")
    return batch


def forward_logits(batch, weights, mask=None):
    batch = _check_shapes(batch, weights, mask)
    if mask is not None:
        batch = batch * mask
    return batch @ weights


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_finite(logits):
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")


def loss(logits, labels, latent, weight_decay):
    """Mean softmax cross-entropy over the batch plus ``wd/2 * ||latent||^2``."""
    logits = np.asarray(logits, dtype=np.float64)
    _check_finite(logits)
    labels = np.asarray(labels)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    ce = log_norm - z[np.arange(len(labels)), labels]
    return float(ce.mean() + 0.5 * weight_decay * np.sum(np.square(latent)))


def gradient(batch, labels, weights, latent, weight_decay, mask=None):
    """d(loss)/d(latent), passing straight through the sign binarization."""
    x = _check_shapes(batch, weights, mask)
    if mask is not None:
        x = x * mask
    logits = x @ weights
    _check_finite(logits)
    delta = softmax(logits)
    delta[np.arange(len(labels)), labels] -= 1.0
    return x.T @ delta / len(labels) + weight_decay * latent


def adam_step(state, grad, latent, lr, beta1=0.9, beta2=0.999, eps=1e-8, clip=CLIP):
    """One bias-corrected Adam update, in place; latent is clipped to [-clip, clip]."""
    state.t += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grad
    state.v *= beta2
    state.v += (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    latent -= lr * m_hat / (np.sqrt(v_hat) + eps)
    if clip is not None:
        np.clip(latent, -clip, clip, out=latent)
    return latent, state


def initial_latent(data, n_classes, cfg):
    if cfg.init == "cold":
        rng = np.random.default_rng([cfg.seed, 1])
        return rng.uniform(-0.01, 0.01, size=(data.dim, n_classes))
    # baseline accumulators; a class absent from the split just starts at 0
    ones = kernels.class_bit_counts(data.words, np.ascontiguousarray(data.labels), n_classes, data.dim)
    sizes = np.bincount(data.labels, minlength=n_classes)
    counts = (2 * ones - sizes[:, None]).T.astype(np.float64)
    scale = np.abs(counts).max()
    return counts / scale if scale > 0 else counts


def _accuracy(x, labels, weights, chunk=4096):
    # +/-1 products summed over D < 2**24 are exact in float32
    w = weights.astype(np.float32)
    hits = 0
    for s in range(0, len(x), chunk):
        o = x[s:s + chunk].astype(np.float32) @ w
        hits += int(np.sum(np.argmax(o, axis=1) == labels[s:s + chunk]))
    return hits / len(x)


def train(data, n_classes, cfg=None, eval_data=None, metadata=None, log=None):
    """Train on ``data``; returns ``(ClassModel, RunMetrics, LatentWeights)``.

    A stratified ``validation_fraction`` of ``data`` is held out and the
    epoch-end binary model with the best validation accuracy is returned (best
    training accuracy when there is no validation split). ``eval_data`` only
    adds a ``test_acc`` entry to each epoch record.
    """
    cfg = cfg or LeHDCConfig()
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if data.labels.min() < 0 or data.labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    rng = np.random.default_rng(cfg.seed)
    if cfg.validation_fraction > 0:
        train_idx, val_idx = split_indices(data.labels, cfg.validation_fraction, True, cfg.seed)
        train_set, val_set = data.subset(train_idx), data.subset(val_idx)
    else:
        train_set, val_set = data, None

    x_train = train_set.bipolar()
    y_train = train_set.labels
    x_val = val_set.bipolar() if val_set is not None and len(val_set) else None
    x_eval = eval_data.bipolar() if eval_data is not None else None

    weights = LatentWeights(initial_latent(train_set, n_classes, cfg))
    state = OptimizerState.zeros(weights.latent.shape)
    metrics = RunMetrics("lehdc", config=asdict(cfg), seeds={"train": cfg.seed})

    def score():
        if x_val is not None:
            return _accuracy(x_val, val_set.labels, weights.binary)
        return _accuracy(x_train, y_train, weights.binary)

    best_score, best_binary, best_epoch = score(), weights.binary.copy(), 0
    lr = cfg.learning_rate
    prev_loss = None
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x_train[idx].astype(np.float64), y_train[idx]
            mask = dropout_mask(weights.latent.shape[0], cfg.dropout_rate, rng)
            xm = xb * mask
            logits = xm @ weights.binary
            total += loss(logits, yb, weights.latent, cfg.weight_decay) * len(idx)
            seen += len(idx)
            grad = gradient(xm, yb, weights.binary, weights.latent, cfg.weight_decay)
            adam_step(state, grad, weights.latent, lr, cfg.beta1, cfg.beta2, cfg.eps)
            weights.refresh()
        epoch_loss = total / seen
        lr_used = lr
        if prev_loss is not None and epoch_loss > prev_loss:
            lr *= cfg.lr_decay_factor
        prev_loss = epoch_loss
        train_acc = _accuracy(x_train, y_train, weights.binary)
        val_acc = _accuracy(x_val, val_set.labels, weights.binary) if x_val is not None else None
        extra = {}
        if x_eval is not None:
            extra["test_acc"] = _accuracy(x_eval, eval_data.labels, weights.binary)
        metrics.add(EpochRecord(
            epoch=epoch, train_acc=train_acc, train_loss=epoch_loss, val_acc=val_acc,
            lr=lr_used, wall_ms=(time.perf_counter() - t0) * 1e3, extra=extra,
        ))
        s = val_acc if val_acc is not None else train_acc
        if s > best_score:
            best_score, best_binary, best_epoch = s, weights.binary.copy(), epoch
        if log is not None:
            log(metrics.epochs[-1])
    metrics.best_epoch = best_epoch
    model = ClassModel(data.dim, pack_bits(best_binary.T > 0), dict(metadata or {}))
    if eval_data is not None:
        metrics.test_acc = evaluate(eval_data, model).accuracy
    return model, metrics, weights
