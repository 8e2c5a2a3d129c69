import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.evaluation.metrics import (bleu4, clipped_counts, exact_match, qa_accuracy, qa_accuracy_by_type,
                                    sentence_bleu)
from src.utils.errors import ShapeError

words = st.lists(st.sampled_from(["a", "red", "blue", "circle", "square", "left", "of", "is"]),
                 min_size=1, max_size=10)


def test_identical_corpus_scores_one():
    corpus = ["a red circle is left of a blue square", "two small cubes are here"]
    assert bleu4(corpus, [[c] for c in corpus]) == pytest.approx(1.0)


def test_disjoint_sentence_uses_smoothing():
    expected = (1 / 5 * 1 / 4 * 1 / 3 * 1 / 2) ** 0.25
    assert bleu4(["a b c d"], [["e f g h"]]) == pytest.approx(expected)


def test_clipped_unigrams():
    assert clipped_counts("the the the the", ["the cat"], 1) == (1, 4)
    assert clipped_counts("the the", ["the the cat", "the"], 1) == (2, 2)


def test_brevity_penalty():
    score = bleu4(["a red circle is"], [["a red circle is left of it"]])
    assert score == pytest.approx(math.exp(1 - 7 / 4))


def test_corpus_order_does_not_matter():
    hyps = ["a red circle", "a blue square is left", "the cube", "two circles are big"]
    refs = [["a red circle is small"], ["a blue square is left of it"], ["a cube"], ["two circles are big"]]
    order = [2, 0, 3, 1]
    assert bleu4(hyps, refs) == pytest.approx(bleu4([hyps[i] for i in order], [refs[i] for i in order]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(words, words), min_size=1, max_size=5))
def test_bleu_bounds_and_self_reference(pairs):
    hyps = [h for h, _ in pairs]
    refs = [[r] for _, r in pairs]
    score = bleu4(hyps, refs)
    assert 0.0 <= score <= 1.0
    if all(len(h) >= 4 for h in hyps):
        assert bleu4(hyps, [r + [h] for h, r in zip(hyps, refs)]) == pytest.approx(1.0)


def test_bleu_errors():
    with pytest.raises(ValueError):
        bleu4([], [])
    with pytest.raises(ShapeError):
        bleu4(["a b"], [])
    assert bleu4([""], [["a b c d"]]) == 0.0


def test_sentence_bleu_and_exact_match():
    assert sentence_bleu("a red circle is here", ["a red circle is here"]) == pytest.approx(1.0)
    assert exact_match(["a b", "c"], ["a b", "d"]) == 0.5
    assert exact_match([], []) == 0.0


def test_qa_accuracy_examples():
    assert qa_accuracy([0], [[1.0, 0.0]]) == 1.0
    assert qa_accuracy([1], [[0.4, 0.6]]) == pytest.approx(0.6)
    assert qa_accuracy([0, 1], [[1.0, 0.0], [1.0, 0.0]]) == 0.5
    with pytest.raises(ShapeError):
        qa_accuracy([0], [])
    with pytest.raises(ValueError):
        qa_accuracy([], [])


def test_qa_accuracy_by_type():
    result = qa_accuracy_by_type([0, 1, 1], [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], ["count", "class", "class"])
    assert result == {"class": 0.5, "count": 1.0}


def test_random_guessing_accuracy():
    rng = np.random.default_rng(0)
    k, n = 32, 20000
    gold = np.eye(k)[rng.integers(0, k, size=n)]
    predictions = rng.integers(0, k, size=n)
    assert abs(qa_accuracy(predictions, gold) - 1 / 32) < 0.01
