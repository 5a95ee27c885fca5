import numpy as np
import pytest

import reference as ref
from binhdc.classifier import ClassModel, evaluate, predict, predict_labels
from binhdc.encoder import EncodedDataset
from binhdc.hv import pack_bits, random_hv
from conftest import hv_from


def test_predict_exact_match():
    hvs = [random_hv(500, s) for s in range(4)]
    model = ClassModel.from_hvs(hvs)
    p = predict(hvs[2], model)
    assert p.label == 2 and p.distances[2] == 0 and p.scores[2] == 500


def test_predict_complement_loses():
    x = random_hv(500, 1)
    model = ClassModel.from_hvs([x.complement(), random_hv(500, 2)])
    p = predict(x, model)
    assert p.label == 1 and p.distances[0] == 1.0


def test_predict_ties_lowest_index():
    x = hv_from([1, 1, -1, -1])
    a = hv_from([1, 1, 1, -1])
    b = hv_from([1, 1, -1, 1])
    assert predict(x, ClassModel.from_hvs([a, b])).label == 0
    assert predict(x, ClassModel.from_hvs([b, a])).label == 0


def test_predict_dim_mismatch():
    model = ClassModel.from_hvs([random_hv(64, 0), random_hv(64, 1)])
    with pytest.raises(ValueError):
        predict(random_hv(65, 0), model)


def test_model_needs_two_classes():
    with pytest.raises(ValueError):
        ClassModel.from_hvs([random_hv(64, 0)])


def test_predict_brute_force_d16(backend):
    rnd = ref.seeded(3)
    for _ in range(300):
        classes = [ref.rand_bipolar(16, rnd) for _ in range(3)]
        q = ref.rand_bipolar(16, rnd)
        p = predict(hv_from(q), ClassModel.from_hvs([hv_from(c) for c in classes]))
        assert p.label == ref.nearest(q, classes)
        assert p.mismatches.tolist() == [ref.hamming_count(q, c) for c in classes]
        assert p.scores.tolist() == [ref.dot(q, c) for c in classes]


def test_prediction_invariants(backend):
    rng = np.random.default_rng(0)
    for _ in range(200):
        k = int(rng.integers(2, 8))
        model = ClassModel.from_hvs([random_hv(257, rng) for _ in range(k)])
        p = predict(random_hv(257, rng), model)
        assert p.label == np.argmin(p.distances) == np.argmax(p.scores)
        assert np.array_equal(p.scores, 257 - 2 * p.mismatches)
        assert np.allclose(p.scores, 257 * (1 - 2 * p.distances))


def _dataset(hvs, labels, k):
    return EncodedDataset(hvs[0].dim, np.stack([h.words for h in hvs]), labels, k)


def test_evaluate_perfect_and_zero():
    hvs = [random_hv(300, s) for s in range(3)]
    model = ClassModel.from_hvs(hvs)
    assert evaluate(_dataset(hvs, [0, 1, 2], 3), model).accuracy == 1.0
    res = evaluate(_dataset(hvs, [1, 2, 0], 3), model)
    assert res.accuracy == 0.0
    assert res.confusion.tolist() == [[0, 0, 1], [1, 0, 0], [0, 1, 0]]


def test_evaluate_confusion_enumerated():
    rng = np.random.default_rng(4)
    model = ClassModel.from_hvs([random_hv(32, rng) for _ in range(3)])
    hvs = [random_hv(32, rng) for _ in range(10)]
    labels = rng.integers(0, 3, size=10)
    res = evaluate(_dataset(hvs, labels, 3), model)
    want = np.zeros((3, 3), dtype=int)
    for h, y in zip(hvs, labels):
        want[y, predict(h, model).label] += 1
    assert res.confusion.tolist() == want.tolist()
    assert res.accuracy == np.trace(want) / 10


def test_evaluate_rejects_empty_and_bad_labels():
    model = ClassModel.from_hvs([random_hv(64, 0), random_hv(64, 1)])
    with pytest.raises(ValueError):
        evaluate(EncodedDataset(64, np.zeros((0, 1), np.uint64), np.zeros(0, int), 2), model)
    with pytest.raises(ValueError):
        evaluate(EncodedDataset(64, np.zeros((1, 1), np.uint64), [2], 3), model)


def test_predict_labels_matches_predict(rng):
    model = ClassModel.from_bits(rng.integers(0, 2, size=(5, 700)).astype(bool))
    q = pack_bits(rng.integers(0, 2, size=(40, 700)).astype(bool))
    labels = predict_labels(q, model)
    for i in range(40):
        assert labels[i] == predict(EncodedDataset(700, q, np.zeros(40, int)).hv(i), model).label
