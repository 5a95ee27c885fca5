import numpy as np
import pytest

import reference as ref
from binhdc.encoder import (
    EncodedDataset,
    FeatureStats,
    build_item_memory,
    encode,
    encode_counts,
    encode_dataset,
    fit_stats,
    level_flip_chunks,
    quantize,
    quantize_matrix,
    sample_rng,
)
from binhdc.hv import bind, hamming


def make_im(dim=512, n=8, q=16, seed=3, lo=0.0, hi=1.0):
    stats = FeatureStats(np.full(n, lo), np.full(n, hi))
    return build_item_memory(dim, n, q, stats, seed)


def test_fit_stats_examples():
    s = fit_stats([([1.0, 2.0, 3.0], 0)])
    assert s.mins.tolist() == s.maxs.tolist() == [1.0, 2.0, 3.0]
    s = fit_stats(np.array([[0, 5, 7], [255, 5, 7]]))
    assert s.mins.tolist() == [0, 5, 7] and s.maxs.tolist() == [255, 5, 7]
    with pytest.raises(ValueError):
        fit_stats(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        fit_stats([([1.0, 2.0], 0), ([1.0], 1)])


def test_build_rejects_bad_args():
    stats = FeatureStats(np.zeros(2), np.ones(2))
    for d, n, q in ((100, 2, 1), (4, 2, 8), (100, 0, 4)):
        with pytest.raises(ValueError):
            build_item_memory(d, n, q, stats, 0)
    with pytest.raises(ValueError):
        build_item_memory(100, 3, 4, stats, 0)


def test_level_chain_endpoints():
    im = make_im(dim=1000, q=10)
    lv = im.level_hvs
    assert hamming(lv[0], lv[-1]) == 0.5
    assert all(hamming(v, v) == 0 for v in lv)


@pytest.mark.parametrize("dim,q", [(4096, 16), (1000, 7), (10_001, 64), (64, 64), (5, 3)])
def test_level_linearity(dim, q):
    im = make_im(dim=dim, q=q)
    lv = im.level_hvs
    for a in range(q):
        for b in range(a, q):
            target = 0.5 * (b - a) / (q - 1)
            assert abs(float(hamming(lv[a], lv[b])) - target) <= 1 / dim
            if b > a + 1:
                assert hamming(lv[a], lv[a + 1]) <= hamming(lv[a], lv[b])


def test_flip_chunks_nearly_equal():
    chunks = level_flip_chunks(10_000, 64, np.random.default_rng(0))
    sizes = [len(c) for c in chunks]
    assert sum(sizes) == 5000 and max(sizes) - min(sizes) <= 1
    assert len(np.unique(np.concatenate(chunks))) == 5000


def test_position_quasi_orthogonal():
    im = make_im(dim=10_000, n=617, q=4)
    pos = im.position_hvs
    rng = np.random.default_rng(0)
    pairs = [tuple(rng.choice(617, 2, replace=False)) for _ in range(300)]
    d = np.array([float(hamming(pos[i], pos[j])) for i, j in pairs])
    assert np.all((d >= 0.45) & (d <= 0.55))
    assert abs(d.mean() - 0.5) < 0.01


def test_item_memory_deterministic():
    a, b = make_im(seed=9), make_im(seed=9)
    assert np.array_equal(a.position_words, b.position_words)
    assert np.array_equal(a.level_words, b.level_words)
    assert not np.array_equal(a.position_words, make_im(seed=10).position_words)


def test_quantize_examples():
    im = build_item_memory(512, 2, 256, FeatureStats([0, 3], [255, 3]), 0)
    assert quantize(0, 0, im) == 0
    assert quantize(255, 0, im) == 255
    assert quantize(100, 0, im) == 100
    assert quantize(-50, 0, im) == 0
    assert quantize(999, 0, im) == 255
    assert quantize(7.0, 1, im) == 0  # constant feature
    x = np.array([[0, 3], [255, 3], [100, 3], [-1, 9]])
    assert quantize_matrix(x, im.stats, 256).tolist() == [[0, 0], [255, 0], [100, 0], [0, 0]]


def test_encode_single_feature_is_bound_pair():
    im = make_im(n=1, q=8)
    for v in (0.0, 0.3, 0.99):
        want = bind(im.position_hvs[0], im.level_hvs[quantize(v, 0, im)])
        assert encode([v], im, 0) == want


def test_encode_matches_reference_d16():
    im = build_item_memory(16, 2, 4, FeatureStats([0, 0], [1, 1]), 11)
    pos = [h.bipolar().tolist() for h in im.position_hvs]
    lvl = [h.bipolar().tolist() for h in im.level_hvs]
    rnd = ref.seeded(4)
    for trial in range(50):
        feats = [rnd.random(), rnd.random()]
        ties = sample_rng(5, trial).integers(0, 2, size=16, dtype=np.uint8).tolist()
        want, want_counts = ref.encode(feats, pos, lvl, [0, 0], [1, 1], ties)
        assert encode_counts(feats, im)[0].tolist() == want_counts
        assert encode(feats, im, sample_rng(5, trial)).bipolar().tolist() == want


def test_encode_feature_count_mismatch():
    with pytest.raises(ValueError):
        encode([0.1, 0.2], make_im(n=3), 0)


def test_identical_levels_identical_hv():
    im = make_im(q=4)
    a = np.full(8, 0.10)
    b = np.full(8, 0.20)  # same bin as 0.10 with 4 levels
    assert encode(a, im, 1) == encode(b, im, 1)


def test_encode_dataset_empty():
    out = encode_dataset(np.zeros((0, 8)), make_im(), 0)
    assert len(out) == 0


def test_encode_dataset_matches_single_encode():
    im = make_im(dim=300, n=6)  # even N so ties occur
    x = np.random.default_rng(1).random((40, 6))
    enc = encode_dataset((x, np.zeros(40, int)), im, 8)
    for i in range(40):
        assert enc.hv(i) == encode(x[i], im, sample_rng(8, i))


def test_encode_dataset_thread_invariant_and_permutation():
    im = make_im(dim=2000, n=10)
    x = np.random.default_rng(2).random((300, 10))
    y = np.arange(300) % 3
    one = encode_dataset((x, y), im, 4, n_jobs=1, chunk_size=32)
    many = encode_dataset((x, y), im, 4, n_jobs=4, chunk_size=32)
    assert np.array_equal(one.words, many.words)
    perm = np.random.default_rng(3).permutation(300)
    permuted = encode_dataset((x[perm], y[perm]), im, 4, sample_ids=perm)
    assert np.array_equal(permuted.words, one.words[perm])
    assert np.array_equal(permuted.labels, y[perm])


def test_single_level_step_changes_few_counts():
    q = 64
    im = make_im(dim=10_000, n=100, q=q, seed=5)
    width = max(len(c) for c in level_flip_chunks(10_000, q, np.random.default_rng(0)))
    x = np.full(100, 10.5 / q)
    x2 = x.copy()
    x2[17] = 11.5 / q
    diff = encode_counts(x, im)[0] != encode_counts(x2, im)[0]
    assert 0 < diff.sum() <= width


def test_distance_grows_with_perturbed_features():
    q = 64
    im = make_im(dim=10_000, n=100, q=q, seed=6)
    rng = np.random.default_rng(7)
    ks = [1, 4, 16, 64]
    means = []
    for k in ks:
        d = []
        for _ in range(50):
            lv = rng.integers(1, q - 1, size=100)
            x = (lv + 0.5) / q
            x2 = x.copy()
            idx = rng.choice(100, k, replace=False)
            x2[idx] += 1.0 / q
            d.append(float(hamming(encode(x, im, 0), encode(x2, im, 0))))
        means.append(np.mean(d))
    assert all(a < b for a, b in zip(means, means[1:]))


def test_encoded_dataset_label_check():
    with pytest.raises(ValueError):
        EncodedDataset(64, np.zeros((2, 1), np.uint64), [0, 3], n_classes=2)
