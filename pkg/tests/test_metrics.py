import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import binom, chisquare

from delearning.data import DataError
from delearning.metrics import (ConfusionMatrix, PairCounts, difficulty, evaluate, g_mean, metrics, q_matrix,
                                q_statistic)
from delearning.zoo import PredictionMatrix, simulate_expert_votes

counts = st.integers(0, 500)


def test_hand_confusion_matrix():
    m = metrics(ConfusionMatrix(tp=50, fn=10, fp=5, tn=35))
    assert m["accuracy"] == pytest.approx(0.85, abs=1e-4)
    assert m["precision"] == pytest.approx(0.9091, abs=1e-4)
    assert m["recall"] == pytest.approx(0.8333, abs=1e-4)
    assert m["f_measure"] == pytest.approx(0.8696, abs=1e-4)
    assert m["g_mean"] == pytest.approx(math.sqrt(50 / 60 * 35 / 40), abs=1e-12)
    assert m["flags"] == []


def test_perfect_classifier():
    m = metrics(ConfusionMatrix(10, 0, 0, 7))
    assert [m[k] for k in ("accuracy", "precision", "recall", "f_measure", "g_mean")] == [1.0] * 5


def test_no_positive_predictions_flagged():
    m = metrics(ConfusionMatrix(tp=0, fn=4, fp=0, tn=6))
    assert m["precision"] == 0.0 and m["f_measure"] == 0.0
    assert any(f.startswith("precision") for f in m["flags"])
    assert any(f.startswith("f_measure") for f in m["flags"])


def test_single_class_flags_specificity():
    m = metrics(ConfusionMatrix(tp=3, fn=1, fp=0, tn=0))
    assert m["specificity"] == 0.0 and m["g_mean"] == 0.0
    assert any(f.startswith("specificity") for f in m["flags"])


def test_empty_and_negative_rejected():
    with pytest.raises(ValueError):
        metrics(ConfusionMatrix(0, 0, 0, 0))
    with pytest.raises(ValueError):
        ConfusionMatrix(-1, 0, 0, 1)


def test_evaluate_from_predictions():
    m = evaluate([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
    assert (m["tp"], m["fn"], m["fp"], m["tn"]) == (2, 1, 1, 1)
    assert g_mean([1, 1, 0, 0, 1], [1, 0, 0, 1, 1]) == pytest.approx(math.sqrt(2 / 3 * 1 / 2))


@given(counts, counts, counts, counts)
def test_accuracy_between_class_recalls(tp, fn, fp, tn):
    if tp + fn == 0 or tn + fp == 0:
        return
    m = metrics(ConfusionMatrix(tp, fn, fp, tn))
    lo, hi = sorted((m["recall"], m["specificity"]))
    assert lo - 1e-12 <= m["accuracy"] <= hi + 1e-12


@given(counts, counts, counts, counts)
def test_f_measure_identity(tp, fn, fp, tn):
    if tp + fn + fp + tn == 0:
        return
    m = metrics(ConfusionMatrix(tp, fn, fp, tn))
    assert abs(m["f_measure"] * (m["precision"] + m["recall"]) - 2 * m["precision"] * m["recall"]) <= 1e-12


def test_q_reference_pair():
    assert q_statistic(PairCounts(7535, 1102, 958, 1905)) == pytest.approx(0.8630, abs=5e-4)


def test_q_identical_and_independent():
    assert q_statistic(PairCounts(30, 0, 0, 12)) == 1.0
    assert q_statistic(PairCounts(4, 2, 6, 3)) == 0.0
    assert math.isnan(q_statistic(PairCounts(5, 0, 0, 0)))


@given(counts, counts, counts, counts)
def test_q_symmetric_and_bounded(a, b, c, d):
    q1 = q_statistic(PairCounts(a, b, c, d))
    q2 = q_statistic(PairCounts(a, c, b, d))
    if math.isnan(q1):
        assert math.isnan(q2)
    else:
        assert q1 == q2 and -1 <= q1 <= 1


def test_q_matrix_from_correctness():
    C = np.array([[1, 1, 0], [1, 1, 1], [0, 0, 1], [0, 1, 0]], dtype=bool)
    Q = q_matrix(C)
    assert Q[0, 1] == Q[1, 0] == 1.0
    assert np.all(np.diag(Q) == 1)
    assert PairCounts.from_correct(C[:, 0], C[:, 2]) == PairCounts(1, 1, 1, 1)


def _pm(correct):
    correct = np.asarray(correct, dtype=bool)
    y = np.ones(len(correct), dtype=np.int8)
    return PredictionMatrix.from_probs(np.where(correct, 0.9, 0.1), labels=y)


def test_difficulty_all_correct():
    dd = difficulty(_pm(np.ones((10, 4))))
    assert dd.histogram.tolist() == [0, 0, 0, 0, 10] and dd.theta == 0.0


def test_difficulty_half_split():
    dd = difficulty(_pm(np.column_stack([np.ones(8), np.zeros(8)])))
    assert dd.histogram.tolist() == [0, 8, 0] and dd.theta == 0.0
    np.testing.assert_allclose(dd.levels, [0, 0.5, 1])


def test_difficulty_count_scale():
    C = np.random.default_rng(0).random((50, 5)) < 0.6
    dd = difficulty(C)
    assert dd.count_variance == pytest.approx(dd.theta * 25)
    assert dd.histogram.sum() == 50


def test_difficulty_column_permutation():
    C = np.random.default_rng(1).random((80, 6)) < 0.7
    assert difficulty(C).theta == difficulty(C[:, ::-1]).theta


def test_difficulty_unlabeled_rejected():
    with pytest.raises(DataError):
        difficulty(PredictionMatrix.from_probs(np.ones((2, 2))))


def test_difficulty_matches_binomial():
    y = (np.random.default_rng(2).random(11500) < 0.3).astype(np.int8)
    dd = difficulty(simulate_expert_votes(y, [0.7] * 35, seed=3))
    expected = binom.pmf(np.arange(36), 35, 0.7) * 11500
    # pool the sparse tails so every expected cell is at least 5
    keep = expected >= 5
    obs = np.concatenate([dd.histogram[keep], [dd.histogram[~keep].sum()]])
    exp = np.concatenate([expected[keep], [expected[~keep].sum()]])
    exp *= obs.sum() / exp.sum()
    assert chisquare(obs, exp).pvalue > 0.01
    assert abs(np.argmax(dd.histogram) - 0.7 * 35) <= 1.5
