import math
import random

import numpy as np
import pytest

import oracles
from obknn import knn_distribution
from obknn.errors import DegenerateQueryError
from obknn.tfidf import TfIdfIndex, cosine, tokenize


def test_tokenize():
    assert tokenize("Hello, WORLD!! foo_bar 42x") == ["hello", "world", "foo", "bar", "42x"]
    assert tokenize("  ...  ") == []


def test_single_doc_idf_is_one():
    index = TfIdfIndex.fit([("A a b", 0)])
    assert index.vocabulary == {"a": 0, "b": 1}
    assert index.idf.tolist() == [1.0, 1.0]
    doc = index.docs[0]
    np.testing.assert_allclose(doc.weights, [2 / math.sqrt(5), 1 / math.sqrt(5)], atol=1e-15)


def test_identical_and_disjoint_docs():
    index = TfIdfIndex.fit([("red fox", 0), ("red fox", 1), ("blue whale", 2)])
    assert cosine(index.docs[0], index.docs[1]) == 1.0
    assert cosine(index.docs[0], index.docs[2]) == 0.0


def test_unit_norm_and_positive_idf():
    index = TfIdfIndex.fit([("a b c", 0), ("a a d", 1), ("zz", 0), ("!!!", 1)])
    for vec in index.docs:
        if vec.weights.size:
            assert abs(math.fsum(vec.weights ** 2) - 1) <= 1e-12
    assert index.docs[3].weights.size == 0
    assert np.all(index.idf > 0) and np.all(np.isfinite(index.idf))


def test_identical_query_ranks_first_at_zero():
    index = TfIdfIndex.fit([("the cat sat", 0), ("a dog ran far", 1), ("cats and dogs", 2)])
    nb = index.rank("A dog ran FAR", 3)
    assert nb.ids[0] == 1 and nb.distances[0] == 0.0


def test_degenerate_query():
    index = TfIdfIndex.fit([("alpha beta", 0)])
    with pytest.raises(DegenerateQueryError):
        index.rank("gamma delta", 1)


def test_empty_corpus():
    with pytest.raises(ValueError):
        TfIdfIndex.fit([])


def test_three_doc_oracle():
    corpus = ["the founder of acme corp", "acme corp hired a new ceo", "the river runs to the sea"]
    index = TfIdfIndex.fit((t, i) for i, t in enumerate(corpus))
    nb = index.rank("who founded acme", 3)
    # hand: only "acme" matches; df(acme)=2 so idf = ln(4/3)+1, and the query is that single term
    docs, idf, _ = oracles.tfidf_vectors(corpus)
    expected = oracles.tfidf_rank(corpus, "who founded acme", 3)
    assert nb.ids.tolist() == [i for i, _ in expected]
    np.testing.assert_allclose(nb.distances, [d for _, d in expected], rtol=0, atol=1e-12)
    assert idf["acme"] == pytest.approx(math.log(4 / 3) + 1, abs=1e-15)
    assert 1 - nb.distances[0] == pytest.approx(docs[0]["acme"], abs=1e-12)


def _tie_groups_match(got_ids, got_d, expected):
    exp_ids = [i for i, _ in expected]
    exp_d = [d for _, d in expected]
    np.testing.assert_allclose(got_d, exp_d, rtol=0, atol=1e-12)
    # ids must match except inside groups whose oracle distances agree to 1e-12
    for pos in range(len(exp_ids)):
        if got_ids[pos] != exp_ids[pos]:
            tied = [exp_ids[j] for j in range(len(exp_d)) if abs(exp_d[j] - exp_d[pos]) <= 1e-12]
            assert got_ids[pos] in tied


def test_random_corpora_oracle():
    rng = random.Random(7)
    for _ in range(40):
        vocab = [f"w{i}" for i in range(rng.randint(5, 100))]
        n = rng.randint(1, 50)
        corpus = [" ".join(rng.choice(vocab) for _ in range(rng.randint(1, 12))) for _ in range(n)]
        index = TfIdfIndex.fit((t, i % 3) for i, t in enumerate(corpus))
        for _ in range(5):
            query = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 6)))
            expected = oracles.tfidf_rank(corpus, query, 16)
            if all(d == 1.0 for _, d in expected) and not set(oracles.tokens(query)) & set(index.vocabulary):
                with pytest.raises(DegenerateQueryError):
                    index.rank(query, 16)
                continue
            nb = index.rank(query, 16)
            _tie_groups_match(nb.ids.tolist(), nb.distances, expected)


def test_repetition_leaves_cosines_unchanged():
    corpus = ["alpha beta beta", "beta gamma", "gamma delta alpha alpha"]
    a = TfIdfIndex.fit((t, 0) for t in corpus)
    b = TfIdfIndex.fit((f"{t} {t}", 0) for t in corpus)
    for i in range(3):
        for j in range(3):
            assert cosine(a.docs[i], a.docs[j]) == pytest.approx(cosine(b.docs[i], b.docs[j]), abs=1e-12)
    np.testing.assert_allclose(a.rank("alpha gamma", 3).distances, b.rank("alpha gamma", 3).distances, atol=1e-12)


def test_ties_follow_corpus_order():
    index = TfIdfIndex.fit([("x y", 0), ("z", 1), ("x y", 2), ("q", 0)])
    nb = index.rank("x y", 4)
    assert nb.ids.tolist() == [0, 2, 1, 3]
    assert nb.distances.tolist() == [0.0, 0.0, 1.0, 1.0]


def test_rank_feeds_neighbor_distribution():
    index = TfIdfIndex.fit([("x y", 0), ("z", 1), ("x y", 2)])
    p = knn_distribution(index.rank("x", 2), 3)
    assert p.tolist() == [0.5, 0.0, 0.5]
