"""Voting layer: a zoo of diverse base classifiers and the vote matrix they produce.

Every classifier follows the scikit-learn protocol with binary targets coded
AD=1, NDC=0. ``predict`` is always ``predict_proba(X)[:, 1] >= 0.5`` so votes
and probabilities never disagree; an exact 0.5 votes AD.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, logsumexp
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset, DataError
from .neural import DenseNet, TrainConfig, TrainingError, forward, train

log = logging.getLogger(__name__)

ALGORITHMS = ("logreg", "naive_bayes", "decision_tree", "random_forest", "random_subspace",
              "adaboost", "mlp", "majority")
SPACES = ("original", "sae20", "sae30")
MLP_HIDDEN = {"original": 51, "sae20": 11, "sae30": 16}


def _check_binary(y) -> np.ndarray:
    y = np.asarray(y)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("targets must be coded AD=1 / NDC=0")
    return y.astype(np.int8)


class _BinaryClassifier(ClassifierMixin, BaseEstimator):
    """predict / predict_proba plumbing shared by the zoo."""

    def _validate_fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        y = _check_binary(y)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return X, y

    def _validate_predict(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"{type(self).__name__} expects {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def predict_proba(self, X):
        p = np.clip(self._proba_ad(self._validate_predict(X)), 0.0, 1.0)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int8)


# ---------------------------------------------------------------------------
# Linear / probabilistic

class LogisticRegressionClassifier(_BinaryClassifier):
    """Logistic regression fitted by Newton's method with a small ridge term."""

    def __init__(self, l2=1e-4, max_iter=50, tol=1e-8):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X, y = self._validate_fit(X, y)
        n, d = X.shape
        A = np.hstack([X, np.ones((n, 1))])
        w = np.zeros(d + 1)
        reg = np.full(d + 1, self.l2 * n)
        reg[-1] = 0.0
        self.converged_ = False
        for it in range(self.max_iter):
            p = expit(A @ w)
            grad = A.T @ (p - y) + reg * w
            H = (A * (p * (1 - p))[:, None]).T @ A + np.diag(reg) + 1e-10 * np.eye(d + 1)
            step = np.linalg.solve(H, grad)
            w -= step
            if np.max(np.abs(step)) < self.tol:
                self.converged_ = True
                break
        self.n_iter_ = it + 1
        self.coef_, self.intercept_ = w[:-1], w[-1]
        return self

    def _proba_ad(self, X):
        return expit(X @ self.coef_ + self.intercept_)

    def to_dict(self):
        return {"coef": self.coef_.tolist(), "intercept": float(self.intercept_)}

    def _load(self, d):
        self.coef_ = np.asarray(d["coef"])
        self.intercept_ = d["intercept"]


class GaussianNaiveBayes(_BinaryClassifier):
    """Per-class Gaussian likelihood on each feature, independent given the class."""

    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, X, y):
        X, y = self._validate_fit(X, y)
        eps = self.var_smoothing * max(float(X.var(axis=0).max()), 1e-12) + 1e-12
        self.theta_ = np.zeros((2, X.shape[1]))
        self.var_ = np.ones((2, X.shape[1]))
        self.class_prior_ = np.zeros(2)
        for c in (0, 1):
            Xc = X[y == c]
            self.class_prior_[c] = len(Xc) / len(X)
            if len(Xc):
                self.theta_[c] = Xc.mean(axis=0)
                self.var_[c] = Xc.var(axis=0) + eps
        return self

    def joint_log_likelihood(self, X):
        jll = np.empty((X.shape[0], 2))
        for c in (0, 1):
            prior = self.class_prior_[c]
            lp = math.log(prior) if prior > 0 else -np.inf
            ll = -0.5 * np.sum(np.log(2 * np.pi * self.var_[c]) + (X - self.theta_[c]) ** 2 / self.var_[c], axis=1)
            jll[:, c] = lp + ll
        return jll

    def posterior(self, X):
        X = self._validate_predict(X)
        jll = self.joint_log_likelihood(X)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def _proba_ad(self, X):
        jll = self.joint_log_likelihood(X)
        return np.exp(jll[:, 1] - logsumexp(jll, axis=1))

    def to_dict(self):
        return {"theta": self.theta_.tolist(), "var": self.var_.tolist(), "prior": self.class_prior_.tolist()}

    def _load(self, d):
        self.theta_ = np.asarray(d["theta"])
        self.var_ = np.asarray(d["var"])
        self.class_prior_ = np.asarray(d["prior"])


class MajorityClassifier(_BinaryClassifier):
    """ZeroR: always the training majority; probability is the training AD fraction."""

    def fit(self, X, y):
        X, y = self._validate_fit(X, y)
        self.ad_fraction_ = float(y.mean())
        return self

    def _proba_ad(self, X):
        return np.full(X.shape[0], self.ad_fraction_)

    def to_dict(self):
        return {"ad_fraction": self.ad_fraction_}

    def _load(self, d):
        self.ad_fraction_ = d["ad_fraction"]


# ---------------------------------------------------------------------------
# Trees

def _bin_thresholds(col: np.ndarray, max_bins: int) -> np.ndarray:
    u = np.unique(col)
    if len(u) <= 1:
        return np.empty(0)
    if len(u) <= max_bins:
        return (u[:-1] + u[1:]) / 2.0
    qs = np.unique(np.quantile(col, np.linspace(0, 1, max_bins + 1)[1:-1], method="lower"))
    # split between a quantile value and the next distinct value
    nxt = u[np.minimum(np.searchsorted(u, qs, side="right"), len(u) - 1)]
    return np.unique((qs + nxt) / 2.0)


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    value: float = 0.0
    n: int = 0


class DecisionTreeClassifier(_BinaryClassifier):
    """CART with Gini impurity over binned candidate thresholds.

    A split is admissible only if both children keep ``min_leaf`` training
    rows. Leaf probability is the (weighted) AD fraction of its rows.
    ``max_features`` (int) draws that many candidate features per node.
    """

    def __init__(self, min_leaf=2, max_depth=None, max_features=None, max_bins=32, random_state=0):
        self.min_leaf = min_leaf
        self.max_depth = max_depth
        self.max_features = max_features
        self.max_bins = max_bins
        self.random_state = random_state

    def fit(self, X, y, sample_weight=None):
        X, y = self._validate_fit(X, y)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        thresholds = [_bin_thresholds(X[:, j], self.max_bins) for j in range(X.shape[1])]
        codes = np.column_stack([np.searchsorted(t, X[:, j], side="left") for j, t in enumerate(thresholds)]) \
            if X.shape[1] else np.zeros((len(y), 0), dtype=np.int64)
        self._grow(codes.astype(np.int64), thresholds, y, w)
        return self

    def _grow(self, codes, thresholds, y, w):
        rng = np.random.default_rng(self.random_state)
        n_feat = codes.shape[1]
        B = max((len(t) for t in thresholds), default=0) + 1
        splittable = np.array([len(t) > 0 for t in thresholds], dtype=bool)
        nodes: list[_Node] = []
        wy = w * y
        stack = [(np.arange(len(y)), 0, -1, False)]
        while stack:
            idx, depth, parent, is_right = stack.pop()
            node_id = len(nodes)
            wsum = w[idx].sum()
            node = _Node(value=float(wy[idx].sum() / wsum) if wsum > 0 else float(y[idx].mean()), n=len(idx))
            nodes.append(node)
            if parent >= 0:
                if is_right:
                    nodes[parent].right = node_id
                else:
                    nodes[parent].left = node_id
            if (len(idx) < 2 * self.min_leaf or node.value in (0.0, 1.0)
                    or (self.max_depth is not None and depth >= self.max_depth)):
                continue
            feats = np.flatnonzero(splittable)
            if self.max_features is not None and self.max_features < len(feats):
                feats = np.sort(rng.choice(feats, size=self.max_features, replace=False))
            if len(feats) == 0:
                continue
            best = self._best_split(codes[np.ix_(idx, feats)], w[idx], wy[idx], B)
            if best is None:
                continue
            fi, b = best
            f = int(feats[fi])
            go_left = codes[idx, f] <= b
            node.feature = f
            node.threshold = float(thresholds[f][b])
            stack.append((idx[~go_left], depth + 1, node_id, True))
            stack.append((idx[go_left], depth + 1, node_id, False))
        self.tree_feature_ = np.array([nd.feature for nd in nodes], dtype=np.int64)
        self.tree_threshold_ = np.array([nd.threshold for nd in nodes])
        self.tree_left_ = np.array([nd.left for nd in nodes], dtype=np.int64)
        self.tree_right_ = np.array([nd.right for nd in nodes], dtype=np.int64)
        self.tree_value_ = np.array([nd.value for nd in nodes])
        self.tree_n_ = np.array([nd.n for nd in nodes], dtype=np.int64)

    def _best_split(self, sub, w, wy, B):
        m, f = sub.shape
        flat = (sub + np.arange(f) * B).ravel()
        cnt = np.bincount(flat, minlength=f * B).reshape(f, B)
        tot_w = np.bincount(flat, weights=np.repeat(w[:, None], f, axis=1).ravel(), minlength=f * B).reshape(f, B)
        pos_w = np.bincount(flat, weights=np.repeat(wy[:, None], f, axis=1).ravel(), minlength=f * B).reshape(f, B)
        lc = np.cumsum(cnt, axis=1)[:, :-1]
        lw = np.cumsum(tot_w, axis=1)[:, :-1]
        lp = np.cumsum(pos_w, axis=1)[:, :-1]
        W, P = tot_w.sum(axis=1, keepdims=True), pos_w.sum(axis=1, keepdims=True)
        rc, rw, rp = m - lc, W - lw, P - lp
        with np.errstate(divide="ignore", invalid="ignore"):
            gl = 2 * lp * (lw - lp) / lw
            gr = 2 * rp * (rw - rp) / rw
        impurity = np.nan_to_num(gl, nan=0.0) + np.nan_to_num(gr, nan=0.0)
        ok = (lc >= self.min_leaf) & (rc >= self.min_leaf) & (lw > 0) & (rw > 0)
        if not ok.any():
            return None
        impurity = np.where(ok, impurity, np.inf)
        parent = 2 * P[:, 0] * (W[:, 0] - P[:, 0]) / W[:, 0]
        k = int(np.argmin(impurity))
        fi, b = divmod(k, impurity.shape[1])
        if not impurity[fi, b] < parent[fi] - 1e-12:
            return None
        return fi, b

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.tree_feature_[node] >= 0
        while active.any():
            cur = node[active]
            f = self.tree_feature_[cur]
            go_left = X[np.flatnonzero(active), f] <= self.tree_threshold_[cur]
            node[active] = np.where(go_left, self.tree_left_[cur], self.tree_right_[cur])
            active = self.tree_feature_[node] >= 0
        return node

    def _proba_ad(self, X):
        return self.tree_value_[self.apply(X)]

    @property
    def n_nodes(self) -> int:
        return len(self.tree_feature_)

    def leaf_sizes(self) -> np.ndarray:
        return self.tree_n_[self.tree_feature_ < 0]

    def to_dict(self):
        return {k: getattr(self, f"tree_{k}_").tolist() for k in ("feature", "threshold", "left", "right", "value", "n")}

    def _load(self, d):
        for k, dt in (("feature", np.int64), ("threshold", float), ("left", np.int64),
                      ("right", np.int64), ("value", float), ("n", np.int64)):
            setattr(self, f"tree_{k}_", np.asarray(d[k], dtype=dt))


class RandomForestClassifier(_BinaryClassifier):
    """Bootstrap-aggregated Gini trees with sqrt(d) candidate features per split."""

    def __init__(self, n_estimators=50, min_leaf=2, max_depth=None, max_features="sqrt", random_state=0):
        self.n_estimators = n_estimators
        self.min_leaf = min_leaf
        self.max_depth = max_depth
        self.max_features = max_features
        self.random_state = random_state

    def fit(self, X, y):
        X, y = self._validate_fit(X, y)
        rng = np.random.default_rng(self.random_state)
        d = X.shape[1]
        mf = max(1, int(math.sqrt(d))) if self.max_features == "sqrt" else self.max_features
        self.estimators_ = []
        for _ in range(self.n_estimators):
            boot = rng.integers(0, len(y), size=len(y))
            tree = DecisionTreeClassifier(self.min_leaf, self.max_depth, mf, random_state=int(rng.integers(2**31)))
            self.estimators_.append(tree.fit(X[boot], y[boot]))
        return self

    def _proba_ad(self, X):
        return np.mean([t._proba_ad(X) for t in self.estimators_], axis=0)

    def to_dict(self):
        return {"trees": [t.to_dict() for t in self.estimators_]}

    def _load(self, d):
        self.estimators_ = [_load_tree(t, self.n_features_in_) for t in d["trees"]]


class BaggingClassifier(RandomForestClassifier):
    """Bootstrap-aggregated full trees (every feature considered at each split)."""

    def __init__(self, n_estimators=50, min_leaf=2, max_depth=None, random_state=0):
        super().__init__(n_estimators, min_leaf, max_depth, None, random_state)


class RandomSubspaceClassifier(_BinaryClassifier):
    """Trees each trained on a random ceil(feature_fraction * d) feature subset."""

    def __init__(self, n_estimators=10, feature_fraction=0.5, min_leaf=2, max_depth=None, random_state=0):
        self.n_estimators = n_estimators
        self.feature_fraction = feature_fraction
        self.min_leaf = min_leaf
        self.max_depth = max_depth
        self.random_state = random_state

    def fit(self, X, y):
        X, y = self._validate_fit(X, y)
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction must be in (0, 1]")
        rng = np.random.default_rng(self.random_state)
        d = X.shape[1]
        k = math.ceil(self.feature_fraction * d)
        self.subspaces_, self.estimators_ = [], []
        for _ in range(self.n_estimators):
            feats = np.sort(rng.choice(d, size=k, replace=False))
            tree = DecisionTreeClassifier(self.min_leaf, self.max_depth, random_state=int(rng.integers(2**31)))
            self.subspaces_.append(feats)
            self.estimators_.append(tree.fit(X[:, feats], y))
        return self

    def _proba_ad(self, X):
        return np.mean([t._proba_ad(X[:, f]) for f, t in zip(self.subspaces_, self.estimators_)], axis=0)

    def to_dict(self):
        return {"subspaces": [f.tolist() for f in self.subspaces_], "trees": [t.to_dict() for t in self.estimators_]}

    def _load(self, d):
        self.subspaces_ = [np.asarray(f, dtype=np.int64) for f in d["subspaces"]]
        self.estimators_ = [_load_tree(t, len(f)) for t, f in zip(d["trees"], self.subspaces_)]


def _load_tree(d, n_features):
    t = DecisionTreeClassifier()
    t.classes_ = np.array([0, 1])
    t.n_features_in_ = n_features
    t._load(d)
    return t


class AdaBoostClassifier(_BinaryClassifier):
    """Discrete AdaBoost with depth-1 trees.

    The AD probability is the logistic link 1 / (1 + exp(-2 F)) of the
    margin F = sum_t alpha_t h_t(x), h_t in {-1, +1}. ``loss="logistic"``
    reweights rows by 1 / (1 + exp(y F)) instead of exp(-y F), the
    logistic-loss variant used as the LogitBoost stand-in.
    """

    def __init__(self, n_estimators=50, loss="exponential", random_state=0):
        self.n_estimators = n_estimators
        self.loss = loss
        self.random_state = random_state

    def fit(self, X, y):
        X, y = self._validate_fit(X, y)
        n = len(y)
        s = 2.0 * y - 1.0
        w = np.full(n, 1.0 / n)
        self.estimators_, self.alphas_ = [], []
        self.train_errors_, self.exp_loss_ = [], []
        F = np.zeros(n)
        for t in range(self.n_estimators):
            stump = DecisionTreeClassifier(min_leaf=1, max_depth=1, random_state=self.random_state + t)
            stump.fit(X, y, sample_weight=w)
            h = np.where(stump._proba_ad(X) >= 0.5, 1.0, -1.0)
            err = float(w[h != s].sum() / w.sum())
            if err >= 0.5:
                break
            err = max(err, 1e-10)
            alpha = 0.5 * math.log((1 - err) / err)
            self.estimators_.append(stump)
            self.alphas_.append(alpha)
            F += alpha * h
            self.train_errors_.append(float(np.mean(np.where(F >= 0, 1, 0) != y)))
            self.exp_loss_.append(float(np.mean(np.exp(-s * F))))
            if self.loss == "logistic":
                w = expit(-s * F)
            else:
                w = w * np.exp(-alpha * s * h)
            w /= w.sum()
            if err <= 1e-10:
                break
        return self

    def decision_function(self, X):
        X = self._validate_predict(X)
        return self._margin(X)

    def _margin(self, X):
        F = np.zeros(X.shape[0])
        for a, st in zip(self.alphas_, self.estimators_):
            F += a * np.where(st._proba_ad(X) >= 0.5, 1.0, -1.0)
        return F

    def _proba_ad(self, X):
        return expit(2.0 * self._margin(X))

    def to_dict(self):
        return {"alphas": list(self.alphas_), "stumps": [t.to_dict() for t in self.estimators_]}

    def _load(self, d):
        self.alphas_ = list(d["alphas"])
        self.estimators_ = [_load_tree(t, self.n_features_in_) for t in d["stumps"]]


class MLPClassifier(_BinaryClassifier):
    """One-hidden-layer sigmoid network trained with momentum SGD on cross-entropy."""

    def __init__(self, hidden_units=16, learning_rate=0.3, momentum=0.2, epochs=30, batch_size=10,
                 init_std=0.1, random_state=0):
        self.hidden_units = hidden_units
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.init_std = init_std
        self.random_state = random_state

    def fit(self, X, y):
        X, y = self._validate_fit(X, y)
        net = DenseNet.initialize((X.shape[1], self.hidden_units, 1), self.init_std, self.random_state)
        cfg = TrainConfig(self.learning_rate, self.momentum, self.epochs, self.batch_size, self.random_state,
                          self.init_std)
        self.net_, self.loss_history_ = train(net, X, y, "cross_entropy", cfg)
        return self

    def _proba_ad(self, X):
        return forward(self.net_, X)[0][:, 0]

    def to_dict(self):
        return {"net": self.net_.to_dict()}

    def _load(self, d):
        self.net_ = DenseNet.from_dict(d["net"])


class SimulatedExpert(_BinaryClassifier):
    """Reads the true label from ``label_column`` and reports it correctly with probability ``accuracy``.

    Stands in for a physician with known skill. Randomness is drawn per row
    from ``(random_state, row position)`` so repeated calls agree.
    """

    def __init__(self, accuracy=0.7, label_column=0, random_state=0):
        self.accuracy = accuracy
        self.label_column = label_column
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = None if X is None else np.shape(X)[1]
        return self

    def _validate_predict(self, X):
        check_is_fitted(self, "classes_")
        return check_array(X, dtype=float)

    def _proba_ad(self, X):
        truth = X[:, self.label_column] >= 0.5
        correct = np.random.default_rng(self.random_state).random(X.shape[0]) < self.accuracy
        return np.where(truth == correct, 1.0, 0.0)


ESTIMATORS = {
    "logreg": LogisticRegressionClassifier,
    "naive_bayes": GaussianNaiveBayes,
    "decision_tree": DecisionTreeClassifier,
    "random_forest": RandomForestClassifier,
    "random_subspace": RandomSubspaceClassifier,
    "adaboost": AdaBoostClassifier,
    "mlp": MLPClassifier,
    "majority": MajorityClassifier,
    "bagging": BaggingClassifier,
    "logitboost": AdaBoostClassifier,
}


# ---------------------------------------------------------------------------
# Zoo

@dataclass(frozen=True)
class ZooConfig:
    algorithms: tuple = ALGORITHMS
    spaces: tuple = SPACES
    seed: int = 0
    tree_min_leaf: int = 2
    subspace_feature_fraction: float = 0.5
    subspace_estimators: int = 10
    forest_trees: int = 50
    adaboost_rounds: int = 50
    mlp_hidden: dict = field(default_factory=lambda: dict(MLP_HIDDEN))
    mlp_learning_rate: float = 0.3
    mlp_momentum: float = 0.2
    mlp_epochs: int = 30
    mlp_batch_size: int = 10

    def __post_init__(self):
        if not self.algorithms or not self.spaces:
            raise ValueError("at least one algorithm and one space required")
        bad = [a for a in self.algorithms if a not in ESTIMATORS]
        if bad:
            raise ValueError(f"unknown algorithms {bad}")
        if not 0.0 < self.subspace_feature_fraction <= 1.0:
            raise ValueError("feature_fraction must be in (0, 1]")

    def make(self, algorithm: str, space: str, seed: int) -> BaseEstimator:
        if algorithm == "logreg":
            return LogisticRegressionClassifier()
        if algorithm == "naive_bayes":
            return GaussianNaiveBayes()
        if algorithm == "decision_tree":
            return DecisionTreeClassifier(min_leaf=self.tree_min_leaf, random_state=seed)
        if algorithm == "random_forest":
            return RandomForestClassifier(self.forest_trees, self.tree_min_leaf, random_state=seed)
        if algorithm == "bagging":
            return BaggingClassifier(self.forest_trees, self.tree_min_leaf, random_state=seed)
        if algorithm == "random_subspace":
            return RandomSubspaceClassifier(self.subspace_estimators, self.subspace_feature_fraction,
                                            self.tree_min_leaf, random_state=seed)
        if algorithm == "adaboost":
            return AdaBoostClassifier(self.adaboost_rounds, random_state=seed)
        if algorithm == "logitboost":
            return AdaBoostClassifier(self.adaboost_rounds, loss="logistic", random_state=seed)
        if algorithm == "mlp":
            hidden = self.mlp_hidden.get(space, 16)
            return MLPClassifier(hidden, self.mlp_learning_rate, self.mlp_momentum, self.mlp_epochs,
                                 self.mlp_batch_size, random_state=seed)
        if algorithm == "majority":
            return MajorityClassifier()
        raise ValueError(f"unknown algorithm {algorithm!r}")


@dataclass
class TrainedClassifier:
    id: int
    algorithm: str
    space: str
    model: BaseEstimator
    notes: list = field(default_factory=list)

    def predict_proba_ad(self, X) -> np.ndarray:
        return self.model.predict_proba(X)[:, 1]

    def to_dict(self) -> dict:
        kind = next(k for k, cls in ESTIMATORS.items() if type(self.model) is cls)
        return {"id": self.id, "algorithm": self.algorithm, "space": self.space, "model": kind,
                "n_features": int(self.model.n_features_in_), "notes": list(self.notes),
                "params": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedClassifier":
        model = ESTIMATORS[d["model"]]()
        model.classes_ = np.array([0, 1])
        model.n_features_in_ = d["n_features"]
        model._load(d["params"])
        return cls(d["id"], d["algorithm"], d["space"], model, list(d.get("notes", [])))


def derive_seed(root: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(root), *map(int, keys)]).generate_state(1)[0])


def _space_values(space) -> np.ndarray:
    return space.values if isinstance(space, Dataset) else np.asarray(space, dtype=float)


def train_zoo(spaces: dict, cfg: ZooConfig, labels=None) -> list:
    """One classifier per (space, algorithm) pair in config order.

    Spaces must be row-aligned. Labels come from the first space unless given.
    A member whose training fails numerically is replaced by the majority
    rule and the failure recorded in its ``notes``.
    """
    missing = [s for s in cfg.spaces if s not in spaces]
    if missing:
        raise DataError(f"missing feature spaces {missing}")
    if labels is None:
        first = spaces[cfg.spaces[0]]
        if not isinstance(first, Dataset) or not first.is_labeled:
            raise DataError("train_zoo needs labeled spaces")
        labels = first.labels
    labels = np.asarray(labels)
    n = len(labels)
    for s in cfg.spaces:
        if _space_values(spaces[s]).shape[0] != n:
            raise DataError(f"space {s!r} is not row-aligned with the labels")
    out = []
    for space in cfg.spaces:
        X = _space_values(spaces[space])
        for algorithm in cfg.algorithms:
            cid = len(out)
            model = cfg.make(algorithm, space, derive_seed(cfg.seed, cid))
            notes = []
            try:
                model.fit(X, labels)
                if getattr(model, "converged_", True) is False:
                    notes.append("did not converge within max_iter")
            except (TrainingError, np.linalg.LinAlgError, FloatingPointError) as exc:
                log.warning("classifier %d (%s/%s) failed: %s; using majority rule", cid, algorithm, space, exc)
                notes.append(f"training failed ({exc}); replaced by majority rule")
                model = MajorityClassifier().fit(X, labels)
            out.append(TrainedClassifier(cid, algorithm, space, model, notes))
    return out


# ---------------------------------------------------------------------------
# Prediction matrix

@dataclass
class PredictionMatrix:
    """n×L votes in {+1, -1} (+1 means AD) with matching AD probabilities."""

    votes: np.ndarray
    probs: np.ndarray
    classifier_ids: list
    labels: Optional[np.ndarray] = None
    row_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.votes = np.asarray(self.votes, dtype=np.int8)
        self.probs = np.asarray(self.probs, dtype=float)
        if self.votes.shape != self.probs.shape or self.votes.ndim != 2:
            raise ValueError("votes and probs must be matching n×L matrices")
        if len(self.classifier_ids) != self.votes.shape[1]:
            raise ValueError("one classifier id per column")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.row_ids is None:
            self.row_ids = np.arange(self.votes.shape[0])

    @classmethod
    def from_probs(cls, probs, classifier_ids=None, labels=None, row_ids=None) -> "PredictionMatrix":
        probs = np.asarray(probs, dtype=float)
        ids = list(range(probs.shape[1])) if classifier_ids is None else list(classifier_ids)
        return cls(np.where(probs >= 0.5, 1, -1), probs, ids, labels, row_ids)

    @property
    def n(self) -> int:
        return self.votes.shape[0]

    @property
    def L(self) -> int:
        return self.votes.shape[1]

    def binary(self) -> np.ndarray:
        """Votes as {1, 0} visibles (AD -> 1)."""
        return (self.votes > 0).astype(float)

    def correct(self) -> np.ndarray:
        if self.labels is None:
            raise DataError("prediction matrix is unlabeled")
        return (self.votes > 0) == (self.labels[:, None] == 1)

    def take(self, idx) -> "PredictionMatrix":
        idx = np.asarray(idx)
        return PredictionMatrix(self.votes[idx], self.probs[idx], list(self.classifier_ids),
                                None if self.labels is None else self.labels[idx], self.row_ids[idx])

    def to_csv(self, path, label_column: str = "outcome") -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["row_id"]
            for cid in self.classifier_ids:
                header += [f"vote_{cid}", f"prob_{cid}"]
            if self.labels is not None:
                header.append(label_column)
            w.writerow(header)
            for i in range(self.n):
                row = [str(int(self.row_ids[i]))]
                for j in range(self.L):
                    row += [str(int(self.votes[i, j])), repr(float(self.probs[i, j]))]
                if self.labels is not None:
                    row.append("AD" if self.labels[i] == 1 else "NDC")
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, label_column: str = "outcome") -> "PredictionMatrix":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            r = csv.reader(fh)
            header = next(r)
            has_label = header[-1] == label_column
            ids = [int(h.split("_", 1)[1]) for h in header[1:(-1 if has_label else None):2]]
            rows = list(r)
        L = len(ids)
        row_ids = np.array([int(x[0]) for x in rows], dtype=np.int64)
        votes = np.array([[int(x[1 + 2 * j]) for j in range(L)] for x in rows], dtype=np.int8).reshape(len(rows), L)
        probs = np.array([[float(x[2 + 2 * j]) for j in range(L)] for x in rows]).reshape(len(rows), L)
        labels = np.array([1 if x[-1] == "AD" else 0 for x in rows], dtype=np.int8) if has_label else None
        return cls(votes, probs, ids, labels, row_ids)


def predict_matrix(classifiers: Sequence[TrainedClassifier], ds: Optional[Dataset] = None,
                   spaces: Optional[dict] = None) -> PredictionMatrix:
    """Apply every classifier to its own feature space; rows follow ``ds``."""
    if spaces is None:
        if ds is None:
            raise DataError("need a dataset or a map of feature spaces")
        spaces = {c.space: ds for c in classifiers}
    probs = []
    n = None
    for c in classifiers:
        if c.space not in spaces:
            raise DataError(f"classifier {c.id}: feature space {c.space!r} not provided")
        X = _space_values(spaces[c.space])
        expected = getattr(c.model, "n_features_in_", None)
        if expected is not None and X.shape[1] != expected:
            raise DataError(f"classifier {c.id}: expects {expected} features in space {c.space!r}, got {X.shape[1]}")
        if n is not None and X.shape[0] != n:
            raise DataError(f"classifier {c.id}: space {c.space!r} is not row-aligned")
        n = X.shape[0]
        probs.append(c.predict_proba_ad(X))
    probs = np.column_stack(probs) if probs else np.empty((0, 0))
    labels = row_ids = None
    ref = ds if ds is not None else next((s for s in spaces.values() if isinstance(s, Dataset)), None)
    if ref is not None:
        labels, row_ids = ref.labels, ref.row_ids
    return PredictionMatrix.from_probs(probs, [c.id for c in classifiers], labels, row_ids)


def simulate_expert_votes(labels, accuracies, seed: int = 0) -> PredictionMatrix:
    """Independent experts, expert j correct with probability ``accuracies[j]``."""
    labels = np.asarray(labels, dtype=np.int8)
    X = labels[:, None].astype(float)
    probs = np.column_stack([
        SimulatedExpert(a, 0, derive_seed(seed, j)).fit(X)._proba_ad(X) for j, a in enumerate(accuracies)
    ])
    return PredictionMatrix.from_probs(probs, list(range(len(accuracies))), labels)


def expert_classifiers(accuracies, seed: int = 0) -> list:
    """Simulated experts wrapped as zoo members reading column 0 of space 'truth'."""
    return [TrainedClassifier(j, "expert", "truth", SimulatedExpert(a, 0, derive_seed(seed, j)).fit())
            for j, a in enumerate(accuracies)]
