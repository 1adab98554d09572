"""Reference ensembles evaluated on the same split as DELearning."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .data import Dataset, DataError
from .metrics import evaluate, q_matrix, difficulty
from .zoo import (AdaBoostClassifier, BaggingClassifier, LogisticRegressionClassifier, PredictionMatrix,
                  RandomForestClassifier, derive_seed)

METHODS = ("LogitBoost", "Bagging", "RandomForest", "AdaBoostM1", "Stacking", "Vote")
LOGITBOOST_NOTE = "LogitBoost row is AdaBoost over stumps with logistic-loss reweighting, not a LogitBoost port"
METRIC_KEYS = ("accuracy", "precision", "recall", "f_measure", "g_mean")


@dataclass(frozen=True)
class BaselineConfig:
    n_estimators: int = 50
    boosting_rounds: int = 50
    min_leaf: int = 2
    seed: int = 0


def row_digest(row_ids) -> str:
    """Short hash of the evaluated row ids; equal digests mean identical test rows."""
    ids = np.ascontiguousarray(np.asarray(row_ids, dtype=np.int64))
    return hashlib.sha256(ids.tobytes()).hexdigest()[:16]


def majority_vote(votes: PredictionMatrix) -> np.ndarray:
    """Plurality of the ±1 votes; a tied row goes to AD."""
    return (votes.votes.sum(axis=1) >= 0).astype(np.int8)


def comparison_row(method: str, y_true, y_pred, row_ids, note: str = "") -> dict:
    m = evaluate(y_true, y_pred)
    row = {"method": method, **{k: m[k] for k in METRIC_KEYS}, "n_test": int(len(y_true)),
           "test_rows": row_digest(row_ids)}
    if note:
        row["note"] = note
    return row


def run_baselines(train: Dataset, test: Dataset, cfg: BaselineConfig = BaselineConfig(),
                  stack_votes: Optional[PredictionMatrix] = None,
                  test_votes: Optional[PredictionMatrix] = None,
                  extra: Optional[dict] = None) -> list:
    """Comparison table rows in fixed method order.

    Tree ensembles and boosting train on ``train`` (one feature space). The
    stacking row fits a logistic meta-learner on ``stack_votes`` (zoo votes
    for rows the zoo did not train on) and the vote row takes the plurality
    of ``test_votes``; both are skipped without zoo votes. ``extra`` maps a
    method name to predictions on ``test`` (e.g. the DELearning row).
    """
    if not (train.is_labeled and test.is_labeled):
        raise DataError("run_baselines needs labeled train and test sets")
    if train.d != test.d:
        raise DataError(f"train has {train.d} features, test has {test.d}")
    y, X, Xt, yt = train.labels, train.values, test.values, test.labels
    if test_votes is not None and not np.array_equal(test_votes.row_ids, test.row_ids):
        raise DataError("test votes are not row-aligned with the test set")
    models = {
        "LogitBoost": AdaBoostClassifier(cfg.boosting_rounds, loss="logistic", random_state=derive_seed(cfg.seed, 0)),
        "Bagging": BaggingClassifier(cfg.n_estimators, cfg.min_leaf, random_state=derive_seed(cfg.seed, 1)),
        "RandomForest": RandomForestClassifier(cfg.n_estimators, cfg.min_leaf, random_state=derive_seed(cfg.seed, 2)),
        "AdaBoostM1": AdaBoostClassifier(cfg.boosting_rounds, random_state=derive_seed(cfg.seed, 3)),
    }
    rows = []
    for name, model in models.items():
        pred = model.fit(X, y).predict(Xt)
        rows.append(comparison_row(name, yt, pred, test.row_ids, LOGITBOOST_NOTE if name == "LogitBoost" else ""))
    if stack_votes is not None and test_votes is not None:
        meta = LogisticRegressionClassifier().fit(stack_votes.binary(), stack_votes.labels)
        rows.append(comparison_row("Stacking", yt, meta.predict(test_votes.binary()), test.row_ids))
    if test_votes is not None:
        rows.append(comparison_row("Vote", yt, majority_vote(test_votes), test.row_ids))
    for name, pred in (extra or {}).items():
        rows.append(comparison_row(name, yt, np.asarray(pred), test.row_ids))
    return rows


def same_split(rows: list) -> bool:
    return len({r["test_rows"] for r in rows}) <= 1


def diversity_summary(votes: PredictionMatrix) -> dict:
    """Pairwise Q over all classifier pairs plus the difficulty distribution on both variance scales."""
    Q = q_matrix(votes.correct())
    ids = list(votes.classifier_ids)
    pairs = []
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            q = float(Q[i, j])
            pairs.append({"i": int(ids[i]), "j": int(ids[j]), "q": None if np.isnan(q) else q})
    dd = difficulty(votes)
    finite = Q[np.triu_indices(len(ids), 1)]
    finite = finite[np.isfinite(finite)]
    return {
        "pairs": pairs,
        "mean_q": float(finite.mean()) if finite.size else None,
        "theta": dd.theta,
        "count_variance": dd.count_variance,
        "histogram": dd.histogram.tolist(),
        "L": dd.L,
    }


def config_dict(cfg: BaselineConfig) -> dict:
    return asdict(cfg)
