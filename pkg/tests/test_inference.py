import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from obknn import (Datastore, InferenceConfig, LabelTable, NeighborSet, Query, argmax_label, interpolate,
                   knn_distribution, predict, predict_batch)
from obknn.errors import DistributionError, EmptyNeighborSetError, LabelError
from obknn.inference import BatchError


def nbs(*triples):
    return NeighborSet.from_triples(triples)


# -- neighbor distribution ------------------------------------------------------

def test_single_neighbor():
    assert knn_distribution(nbs((0, 1, 3.7)), 3).tolist() == [0.0, 1.0, 0.0]


def test_equal_distances_split_evenly():
    assert knn_distribution(nbs((0, 0, 2.0), (1, 1, 2.0)), 2).tolist() == [0.5, 0.5]


def test_ln2_example():
    p = knn_distribution(nbs((0, 0, 0.0), (1, 1, math.log(2))), 2)
    np.testing.assert_allclose(p, [2 / 3, 1 / 3], rtol=0, atol=1e-15)
    np.testing.assert_allclose(p, oracles.knn_distribution([(0, 0, 0.0), (1, 1, math.log(2))], 2), atol=1e-15)


def test_absent_labels_get_exact_zero():
    p = knn_distribution(nbs((0, 2, 0.1), (1, 2, 0.5), (2, 0, 0.9)), 5)
    assert p[1] == 0.0 and p[3] == 0.0 and p[4] == 0.0
    assert abs(math.fsum(p) - 1) <= 1e-12


def test_empty_neighbor_set_is_its_own_error():
    with pytest.raises(EmptyNeighborSetError):
        knn_distribution(nbs(), 3)


def test_neighbor_label_out_of_range():
    with pytest.raises(LabelError):
        knn_distribution(nbs((0, 3, 0.0)), 3)


def test_temperature():
    p = knn_distribution(nbs((0, 0, 0.0), (1, 1, 2 * math.log(2))), 2, temperature=2.0)
    np.testing.assert_allclose(p, [2 / 3, 1 / 3], atol=1e-15)


neighbor_lists = st.lists(st.tuples(st.integers(0, 5), st.floats(0, 50, allow_nan=False)), min_size=1, max_size=32)


@settings(max_examples=200, deadline=None)
@given(neighbor_lists, st.floats(0, 1e3), st.floats(0.1, 10))
def test_shift_invariance(items, c, t):
    base = nbs(*[(i, lab, d) for i, (lab, d) in enumerate(items)])
    shifted = nbs(*[(i, lab, d + c) for i, (lab, d) in enumerate(items)])
    np.testing.assert_allclose(knn_distribution(shifted, 6, t), knn_distribution(base, 6, t), rtol=0, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(neighbor_lists)
def test_mass_conservation(items):
    p = knn_distribution(nbs(*[(i, lab, d) for i, (lab, d) in enumerate(items)]), 6)
    present = {lab for lab, _ in items}
    assert all(p[r] == 0.0 for r in range(6) if r not in present)
    assert abs(math.fsum(p) - 1) <= 1e-12


# -- interpolation --------------------------------------------------------------

def test_interpolate_default_lambda():
    out = interpolate([1.0, 0.0], [0.3, 0.7], 0.2)
    np.testing.assert_allclose(out, [0.44, 0.56], rtol=0, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 20).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0.01, 1), min_size=n, max_size=n), st.lists(st.floats(0.01, 1), min_size=n, max_size=n))))
def test_interpolate_endpoints_bit_exact(pair):
    a = np.array(pair[0]) / sum(pair[0])
    b = np.array(pair[1]) / sum(pair[1])
    assert interpolate(a, b, 0.0).tobytes() == b.tobytes()
    assert interpolate(a, b, 1.0).tobytes() == a.tobytes()
    assert abs(math.fsum(interpolate(a, b, 0.37)) - 1) <= 1e-12


def test_interpolate_rejects():
    with pytest.raises(DistributionError):
        interpolate([1.0], [0.5, 0.5], 0.5)
    for lam in (-0.01, 1.01):
        with pytest.raises(ValueError):
            interpolate([1.0], [1.0], lam)


# -- predict --------------------------------------------------------------------

def test_predict_three_entry_oracle():
    labels = LabelTable(("A", "B"))
    store = Datastore.build([((0, 0), 0), ((3, 4), 1), ((6, 8), 1)], labels)
    cfg = InferenceConfig(k=3, lam=0.5)
    pred = predict(store, Query((0, 0), (0.1, 0.9)), cfg)
    # weights by hand: exp(0), exp(-5), exp(-10)
    w = [1.0, math.exp(-5), math.exp(-10)]
    s = sum(w)
    hand = [0.5 * w[0] / s + 0.5 * 0.1, 0.5 * (w[1] + w[2]) / s + 0.5 * 0.9]
    np.testing.assert_allclose(pred.probs, hand, rtol=0, atol=1e-9)
    entries = [(0, [0, 0], 0), (1, [3, 4], 1), (2, [6, 8], 1)]
    label, final = oracles.predict(entries, [0, 0], [0.1, 0.9], 3, 0.5)
    np.testing.assert_allclose(pred.probs, final, rtol=0, atol=1e-9)
    assert pred.label == label == 0
    label2, probs2, neighbors2 = pred
    assert label2 == 0 and len(neighbors2) == 3


def test_predict_lambda_one_single_entry():
    store = Datastore.build([((1, 1), 1)], LabelTable(("A", "B")))
    assert predict(store, Query((-5, 2), (0.99, 0.01)), InferenceConfig(lam=1.0)).label == 1


def test_predict_lambda_zero_is_base_argmax():
    store = Datastore.build([((1, 1), 1)] * 5, LabelTable(("A", "B", "C")))
    pred = predict(store, Query((1, 1), (0.2, 0.3, 0.5)), InferenceConfig(lam=0.0))
    assert pred.label == 2
    assert pred.probs.tobytes() == np.array([0.2, 0.3, 0.5]).tobytes()


def test_predict_base_size_mismatch():
    store = Datastore.build([((1, 1), 1)], LabelTable(("A", "B", "C")))
    with pytest.raises(DistributionError):
        predict(store, Query((1, 1), (0.5, 0.5)), InferenceConfig())


@pytest.mark.parametrize("metric", ["euclidean", "squared_euclidean", "one_minus_cosine"])
def test_predict_random_oracle(metric):
    rng = random.Random(metric)
    for _ in range(60):
        n, dim, num_labels = rng.randint(1, 100), rng.randint(1, 8), rng.randint(1, 6)
        keys = [oracles.f32(rng.uniform(-1, 1) for _ in range(dim)) for _ in range(n)]
        vals = [rng.randrange(num_labels) for _ in range(n)]
        store = Datastore.build(zip(keys, vals), LabelTable(tuple(map(str, range(num_labels)))))
        raw = [rng.random() + 1e-3 for _ in range(num_labels)]
        base = [x / sum(raw) for x in raw]
        q = oracles.f32(rng.uniform(-1, 1) for _ in range(dim))
        k, lam, t = rng.choice([1, 4, 16]), rng.random(), rng.choice([0.5, 1.0, 2.0])
        pred = predict(store, Query(q, base), InferenceConfig(k=k, lam=lam, metric=metric, temperature=t))
        _, final = oracles.predict([(i, keys[i], vals[i]) for i in range(n)], q, base, k, lam, metric, t)
        np.testing.assert_allclose(pred.probs, final, rtol=0, atol=1e-9)


@pytest.mark.parametrize("b", [0.10, 0.25, 0.29, 0.31, 0.40, 0.45])
def test_flip_threshold(b):
    # unanimous neighbors for label 1 at lambda 0.2: 0.2 + 0.8 b beats 0.8 * 0.55 exactly when b > 0.3
    labels = LabelTable(("no_relation", "org:founded_by", "per:title"), na_label="no_relation")
    keys = np.random.default_rng(0).standard_normal((16, 4))
    store = Datastore.from_arrays(keys, np.full(16, 1), labels)
    base = np.array([0.55, b, 0.45 - b])
    pred = predict(store, Query(keys.mean(axis=0), base), InferenceConfig(k=16, lam=0.2))
    np.testing.assert_allclose(pred.knn_probs, [0.0, 1.0, 0.0], rtol=0, atol=1e-15)
    assert pred.label == (1 if b > 0.3 else 0)


def test_prediction_flip_with_close_base():
    labels = LabelTable(("no_relation", "org:founded_by", "per:title"), na_label="no_relation")
    rng = np.random.default_rng(0)
    keys = rng.standard_normal((16, 4))
    store = Datastore.from_arrays(keys, np.full(16, 1), labels)
    base = np.array([0.55, 0.40, 0.05])
    pred = predict(store, Query(keys[0], base), InferenceConfig(k=16, lam=0.2))
    assert argmax_label(base) == 0
    assert pred.label == 1
    np.testing.assert_allclose(pred.probs, [0.44, 0.52, 0.04], atol=1e-15)


# -- batch ----------------------------------------------------------------------

@pytest.fixture
def batch_setup():
    rng = np.random.default_rng(11)
    labels = LabelTable(tuple("abcd"))
    store = Datastore.from_arrays(rng.standard_normal((200, 6)), rng.integers(0, 4, 200), labels)
    qs = [Query(rng.standard_normal(6), rng.dirichlet(np.ones(4))) for _ in range(40)]
    return store, qs


def test_batch_empty(batch_setup):
    store, _ = batch_setup
    assert predict_batch(store, [], InferenceConfig()) == []


def test_batch_of_one_equals_predict(batch_setup):
    store, qs = batch_setup
    (label, probs), = predict_batch(store, qs[:1], InferenceConfig())
    p = predict(store, qs[0], InferenceConfig())
    assert label == p.label and probs.tobytes() == p.probs.tobytes()


@pytest.mark.parametrize("workers", [1, 4])
def test_batch_partition_invariance(batch_setup, workers):
    store, qs = batch_setup
    cfg = InferenceConfig(k=8, lam=0.4)
    whole = predict_batch(store, qs, cfg, workers=workers)
    parts = predict_batch(store, qs[:13], cfg, workers=workers) + predict_batch(store, qs[13:], cfg, workers=1)
    assert [l for l, _ in whole] == [l for l, _ in parts]
    assert all(a.tobytes() == b.tobytes() for (_, a), (_, b) in zip(whole, parts))


def test_batch_error_reports_index(batch_setup):
    store, qs = batch_setup
    bad = Query(np.zeros(3), np.full(4, 0.25))
    with pytest.raises(BatchError) as info:
        predict_batch(store, qs[:5] + [bad] + qs[5:], InferenceConfig(), workers=2)
    assert info.value.index == 5


def test_threads_env(monkeypatch, batch_setup):
    from obknn.inference import thread_count

    monkeypatch.setenv("OBKNN_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("OBKNN_THREADS", "x")
    with pytest.raises(ValueError):
        thread_count()
