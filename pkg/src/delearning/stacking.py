"""Stacking layer: RBM over the vote matrix, classifier ranking and the DBN-initialized meta network."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .neural import DenseNet, TrainConfig, TrainingError, forward, train
from .zoo import PredictionMatrix


def as_visibles(votes) -> np.ndarray:
    """Votes in {+1, -1} (or a PredictionMatrix) as Bernoulli visibles in {1, 0}."""
    if isinstance(votes, PredictionMatrix):
        return votes.binary()
    V = np.asarray(votes, dtype=float)
    if np.isin(V, (-1.0, 1.0)).all() and (V < 0).any():
        return (V > 0).astype(float)
    return V


@dataclass(frozen=True)
class DbnConfig:
    hidden_size_candidates: tuple = tuple(range(3, 10))
    learning_rate: float = 0.002
    momentum: float = 0.5
    epochs: int = 100
    batch_size: int = 100
    init_std: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.hidden_size_candidates:
            raise ValueError("hidden_size_candidates must be nonempty")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class RBM(BaseEstimator):
    """Bernoulli-Bernoulli restricted Boltzmann machine trained by CD-1 with momentum.

    Positive statistics use the hidden conditional means given the data; one
    Gibbs step samples hidden states, reconstructs visible means and takes the
    hidden means given the reconstruction as negative statistics.

    Attributes
    ----------
    W_ : ndarray of shape (n_visible, n_hidden)
    visible_bias_, hidden_bias_ : ndarray
    recon_error_history_ : list of float
        Mean squared visible reconstruction error, averaged over the batches
        of each epoch.
    """

    def __init__(self, n_hidden=6, learning_rate=0.002, momentum=0.5, epochs=100, batch_size=100,
                 init_std=0.01, random_state=0):
        self.n_hidden = n_hidden
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.init_std = init_std
        self.random_state = random_state

    def _init_params(self, n_visible, rng):
        self.W_ = rng.normal(0.0, self.init_std, size=(n_visible, self.n_hidden))
        self.visible_bias_ = np.zeros(n_visible)
        self.hidden_bias_ = np.zeros(self.n_hidden)
        self.n_features_in_ = n_visible

    def fit(self, X, y=None):
        V = check_array(as_visibles(X), dtype=float)
        if V.shape[0] == 0:
            raise ValueError("empty vote matrix")
        rng = np.random.default_rng(self.random_state)
        self._init_params(V.shape[1], rng)
        vel = [np.zeros_like(self.W_), np.zeros_like(self.visible_bias_), np.zeros_like(self.hidden_bias_)]
        self.recon_error_history_ = []
        n = V.shape[0]
        for epoch in range(self.epochs):
            order = rng.permutation(n)
            errs, sizes = [], []
            for start in range(0, n, self.batch_size):
                v0 = V[order[start:start + self.batch_size]]
                m = v0.shape[0]
                h0 = self.hidden_means(v0)
                h_sample = (rng.random(h0.shape) < h0).astype(float)
                v1 = self.visible_means(h_sample)
                h1 = self.hidden_means(v1)
                grads = [(v0.T @ h0 - v1.T @ h1) / m, (v0 - v1).mean(axis=0), (h0 - h1).mean(axis=0)]
                for p, v, g in zip((self.W_, self.visible_bias_, self.hidden_bias_), vel, grads):
                    v *= self.momentum
                    v += self.learning_rate * g
                    p += v
                errs.append(float(np.mean((v0 - v1) ** 2)))
                sizes.append(m)
            err = float(np.average(errs, weights=sizes))
            if not (np.isfinite(err) and np.isfinite(self.W_).all()):
                raise TrainingError(f"non-finite RBM parameter at epoch {epoch}")
            self.recon_error_history_.append(err)
        return self

    def hidden_means(self, V):
        return expit(V @ self.W_ + self.hidden_bias_)

    def visible_means(self, H):
        return expit(H @ self.W_.T + self.visible_bias_)

    def transform(self, X):
        check_is_fitted(self, "W_")
        return self.hidden_means(as_visibles(X))

    def sample_hidden(self, V, rng):
        p = self.hidden_means(np.atleast_2d(V))
        return (rng.random(p.shape) < p).astype(np.int8)

    def reconstruction_error(self, X) -> float:
        V = as_visibles(X)
        return float(np.mean((V - self.visible_means(self.hidden_means(V))) ** 2))

    def to_dict(self) -> dict:
        return {"n_hidden": self.n_hidden, "W": self.W_.tolist(), "visible_bias": self.visible_bias_.tolist(),
                "hidden_bias": self.hidden_bias_.tolist(),
                "recon_error_history": list(getattr(self, "recon_error_history_", []))}

    @classmethod
    def from_dict(cls, d: dict) -> "RBM":
        obj = cls(n_hidden=d["n_hidden"])
        obj.W_ = np.asarray(d["W"], dtype=float).reshape(-1, d["n_hidden"])
        obj.visible_bias_ = np.asarray(d["visible_bias"], dtype=float)
        obj.hidden_bias_ = np.asarray(d["hidden_bias"], dtype=float)
        obj.n_features_in_ = obj.W_.shape[0]
        obj.recon_error_history_ = list(d.get("recon_error_history", []))
        return obj


def train_rbm(votes, h: int, cfg: DbnConfig, seed: int | None = None) -> tuple[RBM, list]:
    rbm = RBM(h, cfg.learning_rate, cfg.momentum, cfg.epochs, cfg.batch_size, cfg.init_std,
              cfg.seed + h if seed is None else seed)
    rbm.fit(votes)
    return rbm, rbm.recon_error_history_


@dataclass
class HiddenSizeSearch:
    best: int
    errors: dict
    curves: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)


def select_hidden_size(votes, cfg: DbnConfig) -> HiddenSizeSearch:
    """Train one RBM per candidate size (seeded seed + h) and keep the lowest final error.

    Ties go to the smaller hidden layer.
    """
    errors, curves, models = {}, {}, {}
    for h in sorted(set(cfg.hidden_size_candidates)):
        rbm, hist = train_rbm(votes, h, cfg)
        errors[h] = hist[-1] if hist else rbm.reconstruction_error(votes)
        curves[h] = hist
        models[h] = rbm
    best = min(errors, key=lambda h: (errors[h], h))
    return HiddenSizeSearch(best, errors, curves, models)


def rank_classifiers(rbm: RBM) -> tuple[np.ndarray, np.ndarray]:
    """Importance score per visible unit (sum of absolute weights to the hidden layer).

    Returns ``(scores, order)`` where ``order`` lists visible indices from most
    to least important; ties keep the lower index first.
    """
    scores = np.abs(rbm.W_).sum(axis=1)
    order = np.lexsort((np.arange(len(scores)), -scores))
    return scores, order


def ranks_from_order(order: np.ndarray) -> np.ndarray:
    """1-based rank of each visible unit."""
    ranks = np.empty(len(order), dtype=np.int64)
    ranks[order] = np.arange(1, len(order) + 1)
    return ranks


def one_hot_outcomes(labels) -> np.ndarray:
    """Targets for the two-output head: column 0 is AD, column 1 is NDC."""
    y = np.asarray(labels).astype(float)
    return np.column_stack([y, 1.0 - y])


def init_meta_net(rbm: RBM, n_outputs: int = 2, init_std: float = 0.01, seed: int = 0) -> DenseNet:
    """L -> h -> 2 net whose first layer is the RBM's (W, hidden bias)."""
    rng = np.random.default_rng(seed)
    L, h = rbm.W_.shape
    return DenseNet((L, h, n_outputs), [rbm.W_.copy(), rng.normal(0.0, init_std, size=(h, n_outputs))],
                    [rbm.hidden_bias_.copy(), np.zeros(n_outputs)])


META_TRAIN = TrainConfig(learning_rate=0.5, momentum=0.5, epochs=40, batch_size=100, seed=0, init_std=0.01)


def build_meta_nn(rbm: RBM, votes, labels, train_cfg: TrainConfig = META_TRAIN) -> DenseNet:
    """Initialize from the RBM and fit votes -> outcome by backprop on cross-entropy."""
    V = as_visibles(votes)
    net = init_meta_net(rbm, 2, train_cfg.init_std, train_cfg.seed)
    trained, _ = train(net, V, one_hot_outcomes(labels), "cross_entropy", train_cfg)
    return trained


def meta_outputs(net: DenseNet, votes) -> np.ndarray:
    """Raw (O_AD, O_NDC) sigmoid outputs, one row per sample."""
    return forward(net, as_visibles(votes))[0]


def ad_probability(outputs: np.ndarray) -> np.ndarray:
    """Normalize the two output units to P(AD)."""
    total = outputs.sum(axis=1)
    safe = np.where(total > 0, total, 1.0)
    return np.where(total > 0, outputs[:, 0] / safe, 0.5)


class DBNStackingClassifier(ClassifierMixin, BaseEstimator):
    """Votes -> RBM pretraining (hidden size chosen by reconstruction error) -> backprop meta network.

    Fits on a vote matrix (entries in {+1, -1} or {1, 0}) and binary targets
    (AD=1). ``importance_`` holds the accumulated absolute weight per input.
    """

    def __init__(self, hidden_size_candidates=tuple(range(3, 10)), learning_rate=0.002, momentum=0.5,
                 epochs=100, batch_size=100, init_std=0.01, meta_learning_rate=0.5, meta_momentum=0.5,
                 meta_epochs=40, random_state=0):
        self.hidden_size_candidates = hidden_size_candidates
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.init_std = init_std
        self.meta_learning_rate = meta_learning_rate
        self.meta_momentum = meta_momentum
        self.meta_epochs = meta_epochs
        self.random_state = random_state

    @property
    def dbn_config(self) -> DbnConfig:
        return DbnConfig(tuple(self.hidden_size_candidates), self.learning_rate, self.momentum, self.epochs,
                         self.batch_size, self.init_std, self.random_state)

    @property
    def meta_config(self) -> TrainConfig:
        return TrainConfig(self.meta_learning_rate, self.meta_momentum, self.meta_epochs, self.batch_size,
                           self.random_state, self.init_std)

    def fit(self, X, y):
        V = check_array(as_visibles(X), dtype=float)
        y = np.asarray(y)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = V.shape[1]
        self.search_ = select_hidden_size(V, self.dbn_config)
        self.rbm_ = self.search_.models[self.search_.best]
        self.importance_, self.ranking_ = rank_classifiers(self.rbm_)
        self.net_ = build_meta_nn(self.rbm_, V, y, self.meta_config)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        p = ad_probability(meta_outputs(self.net_, X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int8)
