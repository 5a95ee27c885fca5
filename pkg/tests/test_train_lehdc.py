import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference as ref
from binhdc.classifier import evaluate, predict_labels
from binhdc.encoder import EncodedDataset
from binhdc.hv import pack_bits
from binhdc.train_classic import train_baseline
from binhdc.train_lehdc import (
    LeHDCConfig,
    OptimizerState,
    adam_step,
    binarize,
    dropout_mask,
    forward_logits,
    gradient,
    initial_latent,
    loss,
    softmax,
    train,
)


def prototypes_dataset(dim, k, per_class, flip, seed, orthogonal=False):
    rng = np.random.default_rng(seed)
    if orthogonal:
        # rows of a Sylvester Hadamard matrix are exactly orthogonal
        h = np.array([[1]])
        while h.shape[0] < dim:
            h = np.block([[h, h], [h, -h]])
        protos = h[1:k + 1] > 0
    else:
        protos = rng.integers(0, 2, size=(k, dim)).astype(bool)
    labels = np.repeat(np.arange(k), per_class)
    bits = protos[labels] ^ (rng.random((len(labels), dim)) < flip)
    return EncodedDataset(dim, pack_bits(bits), labels, k)


def test_forward_examples():
    d = 32
    x = np.ones((1, d))
    assert forward_logits(x, np.ones((d, 2)))[0].tolist() == [d, d]
    w = np.stack([np.ones(d), -np.ones(d)], axis=1)
    assert forward_logits(x, w)[0].tolist() == [d, -d]


def test_binarize_zero_is_positive():
    assert binarize(np.array([-0.2, 0.0, 0.3])).tolist() == [-1, 1, 1]


def test_loss_examples():
    assert loss(np.zeros((1, 2)), [0], np.zeros((4, 2)), 0.0) == pytest.approx(math.log(2), abs=1e-12)
    assert loss(np.array([[1e4, -1e4]]), [0], np.zeros((4, 2)), 0.0) == pytest.approx(0, abs=1e-12)
    d, k = 100, 3
    lat = np.ones((d, k))
    assert loss(np.zeros((1, k)), [0], lat, 0.05) == pytest.approx(math.log(3) + 0.025 * d * k)


def test_loss_rejects_nonfinite():
    with pytest.raises(FloatingPointError):
        loss(np.array([[np.nan, 0.0]]), [0], np.zeros((1, 2)), 0.0)


def test_gradient_example():
    # equal logits: p = (0.5, 0.5), y = 0, so dL/dC[:, k] = x * (p_k - y_k)
    x = np.array([[1.0, -1.0, 1.0]])
    w = np.zeros((3, 2))
    g = gradient(x, [0], np.ones((3, 2)), w, 0.0)
    assert np.allclose(g[:, 0], -0.5 * x[0])
    assert np.allclose(g[:, 1], 0.5 * x[0])


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d, k, b = 16, 4, 4
        x = rng.choice([-1.0, 1.0], size=(b, d))
        y = rng.integers(0, k, b)
        lat = rng.uniform(-1, 1, (d, k))
        wd = rng.uniform(0, 0.1)
        mask = dropout_mask(d, 0.5, rng)
        g = gradient(x, y, lat, lat, wd, mask)
        fd = np.array(ref.fd_gradient((x * mask).tolist(), y.tolist(), lat.tolist(), wd))
        rel = np.abs(g - fd) / np.maximum(np.abs(g), np.abs(fd))
        assert rel.max() < 1e-5


def test_gradient_straight_through():
    # the sign is treated as identity: gradient wrt latent uses binary weights in the forward
    rng = np.random.default_rng(1)
    x = rng.choice([-1.0, 1.0], size=(5, 20))
    lat = rng.uniform(-1, 1, (20, 3))
    y = rng.integers(0, 3, 5)
    g = gradient(x, y, binarize(lat), lat, 0.0)
    p = softmax(x @ binarize(lat))
    p[np.arange(5), y] -= 1
    assert np.allclose(g, x.T @ p / 5)


def test_adam_first_step_bounded():
    rng = np.random.default_rng(2)
    lat = rng.uniform(-0.5, 0.5, (50, 4))
    before = lat.copy()
    grad = rng.normal(size=(50, 4)) * 10 ** rng.uniform(-6, 3, size=(50, 4))
    adam_step(OptimizerState.zeros(lat.shape), grad, lat, 0.01)
    assert np.all(np.abs(lat - before) <= 0.01 + 1e-12)


def test_adam_zero_gradient_keeps_weights():
    lat = np.array([[0.3, -0.2]])
    state = OptimizerState.zeros(lat.shape)
    adam_step(state, np.zeros_like(lat), lat, 0.1)
    assert lat.tolist() == [[0.3, -0.2]]


def test_adam_matches_scalar_trace():
    grads = [0.5, -0.2, 1.3]
    want = ref.adam(grads, 0.1, 0.05)
    lat = np.array([0.1])
    state = OptimizerState.zeros(1)
    for g, w in zip(grads, want):
        adam_step(state, np.array([g]), lat, 0.05)
        assert lat[0] == pytest.approx(w, abs=1e-15)


def test_adam_clips_latent():
    lat = np.array([0.99, -0.99])
    adam_step(OptimizerState.zeros(2), np.array([-1.0, 1.0]), lat, 0.5)
    assert lat.tolist() == [1.0, -1.0]


@given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=8))
@settings(max_examples=200, deadline=None)
def test_softmax_rows_sum_to_one(row):
    p = softmax(np.array([row]))
    assert abs(p.sum() - 1) < 1e-12
    assert np.all(p >= 0)


def test_softmax_large_logits_stable():
    p = softmax(np.array([[1e4, 0.0, -1e4]]))
    assert np.all(np.isfinite(p)) and p[0, 0] == 1.0


def test_dropout_mask_statistics():
    rng = np.random.default_rng(3)
    m = dropout_mask(100_000, 0.3, rng)
    assert set(np.unique(m).tolist()) <= {0.0, 1 / 0.7}
    assert abs(m.mean() - 1) < 0.02
    assert dropout_mask(10, 0.0, rng).tolist() == [1.0] * 10


def test_warm_start_scaled_baseline_counts():
    data = prototypes_dataset(128, 3, 7, 0.3, 4)
    lat = initial_latent(data, 3, LeHDCConfig())
    _, nb = train_baseline(data, 3)
    assert np.abs(lat).max() == 1.0
    assert np.allclose(lat * np.abs(nb.counts).max(), nb.counts.T)


def test_zero_epochs_returns_initial_sign():
    data = prototypes_dataset(128, 3, 7, 0.3, 5)
    cfg = LeHDCConfig(epochs=0, validation_fraction=0)
    model, metrics, weights = train(data, 3, cfg)
    want = binarize(initial_latent(data, 3, cfg))
    assert np.array_equal(model.bipolar().T, want)
    assert metrics.epochs == []


def test_learns_separable_toy_set():
    data = prototypes_dataset(256, 3, 10, 0.05, 6, orthogonal=True)
    cfg = LeHDCConfig(epochs=20, validation_fraction=0, batch_size=8, learning_rate=0.01,
                      dropout_rate=0.0, init="cold", seed=1)
    model, metrics, _ = train(data, 3, cfg)
    assert evaluate(data, model).accuracy == 1.0
    assert max(r.train_acc for r in metrics.epochs) == 1.0


def test_inference_is_argmax_of_logits():
    data = prototypes_dataset(300, 4, 10, 0.4, 7)
    model, _, weights = train(data, 4, LeHDCConfig(epochs=3, validation_fraction=0))
    x = data.bipolar(np.float64)
    logits = forward_logits(x, model.bipolar().T.astype(float))
    assert np.array_equal(predict_labels(data.words, model), np.argmax(logits, axis=1))


def test_metrics_and_selection():
    data = prototypes_dataset(256, 4, 25, 0.42, 8)
    test = prototypes_dataset(256, 4, 5, 0.42, 8)
    model, metrics, _ = train(data, 4, LeHDCConfig(epochs=6), eval_data=test)
    assert [r.epoch for r in metrics.epochs] == list(range(1, 7))
    assert all(r.val_acc is not None and r.train_loss > 0 for r in metrics.epochs)
    assert metrics.test_acc == evaluate(test, model).accuracy
    if metrics.best_epoch:
        best = metrics.epochs[metrics.best_epoch - 1].val_acc
        assert best == max(r.val_acc for r in metrics.epochs)


def test_lr_halves_when_loss_rises():
    data = prototypes_dataset(256, 4, 25, 0.45, 9)
    _, metrics, _ = train(data, 4, LeHDCConfig(epochs=15, learning_rate=0.5, lr_decay_factor=0.5))
    ep = metrics.epochs
    rises = 0
    for prev, cur, nxt in zip(ep, ep[1:], ep[2:]):
        rose = cur.train_loss > prev.train_loss
        rises += rose
        assert nxt.lr == (cur.lr * 0.5 if rose else cur.lr)
    assert ep[1].lr == ep[0].lr == 0.5
    assert rises > 0


def test_deterministic():
    data = prototypes_dataset(256, 3, 12, 0.4, 10)
    cfg = LeHDCConfig(epochs=4, seed=5)
    a, ma, _ = train(data, 3, cfg)
    b, mb, _ = train(data, 3, cfg)
    assert np.array_equal(a.class_words, b.class_words)
    assert [r.train_loss for r in ma.epochs] == [r.train_loss for r in mb.epochs]


def test_config_validation():
    for bad in ({"dropout_rate": 1.0}, {"weight_decay": -1}, {"batch_size": 0},
                {"learning_rate": 0}, {"init": "hot"}, {"validation_fraction": 1.0}):
        with pytest.raises(ValueError):
            LeHDCConfig(**bad)


def test_rejects_bad_labels():
    data = prototypes_dataset(64, 3, 4, 0.1, 11)
    with pytest.raises(ValueError):
        train(data, 2, LeHDCConfig(epochs=1))
