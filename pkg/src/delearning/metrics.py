"""Confusion-matrix metrics and ensemble diversity measures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with AD as the positive class."""

    tp: int
    fn: int
    fp: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp, self.tn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ConfusionMatrix":
        t = np.asarray(y_true).astype(bool)
        p = np.asarray(y_pred).astype(bool)
        if t.shape != p.shape:
            raise ValueError("y_true and y_pred lengths differ")
        return cls(int(np.sum(t & p)), int(np.sum(t & ~p)), int(np.sum(~t & p)), int(np.sum(~t & ~p)))


def _ratio(num: float, den: float, name: str, flags: list) -> float:
    if den == 0:
        flags.append(f"{name}: zero denominator")
        return 0.0
    return num / den


def metrics(cm: ConfusionMatrix) -> dict:
    """Accuracy, precision, recall, F-measure, specificity and G-mean.

    A zero denominator yields 0 for that metric and a message in ``flags``.
    """
    if cm.total <= 0:
        raise ValueError("metrics need at least one evaluated sample")
    flags: list = []
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", flags)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", flags)
    specificity = _ratio(cm.tn, cm.tn + cm.fp, "specificity", flags)
    f = _ratio(2 * precision * recall, precision + recall, "f_measure", flags)
    return {
        "accuracy": accuracy,
        "precision": precision,
        "recall": recall,
        "f_measure": f,
        "specificity": specificity,
        "g_mean": math.sqrt(recall * specificity),
        "flags": flags,
    }


def evaluate(y_true, y_pred) -> dict:
    cm = ConfusionMatrix.from_predictions(y_true, y_pred)
    out = metrics(cm)
    out.update(tp=cm.tp, fn=cm.fn, fp=cm.fp, tn=cm.tn)
    return out


def g_mean(y_true, y_pred) -> float:
    return metrics(ConfusionMatrix.from_predictions(y_true, y_pred))["g_mean"]


# ---------------------------------------------------------------------------
# Diversity

@dataclass(frozen=True)
class PairCounts:
    """Joint correctness of two classifiers: n10 means the first right, the second wrong."""

    n11: int
    n10: int
    n01: int
    n00: int

    @property
    def total(self) -> int:
        return self.n11 + self.n10 + self.n01 + self.n00

    @classmethod
    def from_correct(cls, a, b) -> "PairCounts":
        a = np.asarray(a, dtype=bool)
        b = np.asarray(b, dtype=bool)
        return cls(int(np.sum(a & b)), int(np.sum(a & ~b)), int(np.sum(~a & b)), int(np.sum(~a & ~b)))


def q_statistic(pc: PairCounts) -> float:
    """Yule's Q over joint correctness; NaN when the denominator vanishes."""
    agree = pc.n11 * pc.n00
    disagree = pc.n01 * pc.n10
    den = agree + disagree
    if den == 0:
        return float("nan")
    return (agree - disagree) / den


def q_matrix(correct: np.ndarray) -> np.ndarray:
    """Pairwise Q for every column pair of an n×L correctness matrix (diagonal 1)."""
    C = np.asarray(correct, dtype=bool)
    L = C.shape[1]
    Q = np.eye(L)
    for i in range(L):
        for j in range(i + 1, L):
            Q[i, j] = Q[j, i] = q_statistic(PairCounts.from_correct(C[:, i], C[:, j]))
    return Q


@dataclass
class DifficultyDistribution:
    """Distribution of E, the fraction of classifiers correct on a row.

    ``histogram[k]`` counts rows with exactly k correct classifiers.
    ``theta`` is the population variance of E; ``count_variance`` is the same
    spread on the raw correct-count scale (theta * L**2).
    """

    histogram: np.ndarray
    theta: float
    L: int
    count_variance: float = field(default=0.0)

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.L + 1) / self.L


def difficulty(votes) -> DifficultyDistribution:
    """Difficulty of a labeled PredictionMatrix (or an n×L boolean correctness matrix)."""
    if hasattr(votes, "correct"):
        if votes.labels is None:
            raise DataError("difficulty needs a labeled prediction matrix")
        correct = votes.correct()
    else:
        correct = np.asarray(votes, dtype=bool)
    L = correct.shape[1]
    k = correct.sum(axis=1)
    hist = np.bincount(k, minlength=L + 1)
    E = k / L
    theta = float(np.var(E))
    return DifficultyDistribution(hist, theta, L, float(np.var(k.astype(float))))
