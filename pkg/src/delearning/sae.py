"""Sparse autoencoder feature learning."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import Dataset, DataError
from .neural import DenseNet, Sparsity, TrainConfig, forward, train


@dataclass(frozen=True)
class SaeConfig:
    hidden_units: int = 20
    rho: float = 0.05
    beta: float = 1.0
    epochs: int = 200
    momentum: float = 0.5
    learning_rate: float = 0.5
    batch_size: int = 100
    init_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must be in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")


class SparseAutoencoder(TransformerMixin, BaseEstimator):
    """Single-hidden-layer sigmoid autoencoder with a KL sparsity penalty.

    The objective is the reconstruction loss 1/(2m) sum ||x_hat - x||^2 plus
    ``beta * sum_j KL(rho || rho_hat_j)`` where ``rho_hat_j`` is the mean
    activation of hidden unit j over the mini-batch.

    Parameters
    ----------
    hidden_units : int, default=20
        Size of the code layer; ``transform`` returns this many columns.
    rho : float, default=0.05
        Target mean activation of each hidden unit.
    beta : float, default=1.0
        Weight of the sparsity penalty.
    epochs, learning_rate, momentum, batch_size, init_std
        Momentum-SGD settings.
    random_state : int, default=0
        Seeds weight initialization and mini-batch order.

    Attributes
    ----------
    net_ : DenseNet
        Trained d -> h -> d network.
    mse_history_ : list of float
        Full-data reconstruction MSE (mean over all entries) after each epoch.
    """

    def __init__(self, hidden_units=20, rho=0.05, beta=1.0, epochs=200, learning_rate=0.5,
                 momentum=0.5, batch_size=100, init_std=0.1, random_state=0):
        self.hidden_units = hidden_units
        self.rho = rho
        self.beta = beta
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.init_std = init_std
        self.random_state = random_state

    @classmethod
    def from_config(cls, cfg: SaeConfig) -> "SparseAutoencoder":
        return cls(hidden_units=cfg.hidden_units, rho=cfg.rho, beta=cfg.beta, epochs=cfg.epochs,
                   learning_rate=cfg.learning_rate, momentum=cfg.momentum,
                   batch_size=cfg.batch_size, init_std=cfg.init_std, random_state=cfg.seed)

    @property
    def config(self) -> SaeConfig:
        return SaeConfig(hidden_units=self.hidden_units, rho=self.rho, beta=self.beta,
                         epochs=self.epochs, momentum=self.momentum,
                         learning_rate=self.learning_rate, batch_size=self.batch_size,
                         init_std=self.init_std, seed=self.random_state)

    def fit(self, X, y=None, init_net: DenseNet | None = None):
        X = check_array(X, dtype=float)
        SaeConfig(self.hidden_units, self.rho, self.beta)  # validates
        d = X.shape[1]
        self.n_features_in_ = d
        if init_net is None:
            init_net = DenseNet.initialize((d, self.hidden_units, d), self.init_std, self.random_state)
        elif init_net.layer_sizes != (d, self.hidden_units, d):
            raise ValueError(f"init_net shape {init_net.layer_sizes} != {(d, self.hidden_units, d)}")
        cfg = TrainConfig(self.learning_rate, self.momentum, self.epochs, self.batch_size,
                          self.random_state, self.init_std)
        mse = []
        self.net_, self.loss_history_ = train(
            init_net, X, X, "mse", cfg, Sparsity(self.rho, self.beta),
            callback=lambda epoch, net: mse.append(reconstruction_mse(net, X)),
        )
        self.mse_history_ = mse
        return self

    def transform(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return forward(self.encoder, X)[0]

    def reconstruct(self, X):
        check_is_fitted(self, "net_")
        return forward(self.net_, check_array(X, dtype=float))[0]

    @property
    def encoder(self) -> DenseNet:
        return DenseNet(self.net_.layer_sizes[:2], self.net_.weights[:1], self.net_.biases[:1])

    @property
    def decoder(self) -> DenseNet:
        return DenseNet(self.net_.layer_sizes[1:], self.net_.weights[1:], self.net_.biases[1:])

    def to_dict(self) -> dict:
        check_is_fitted(self, "net_")
        return {"params": self.get_params(), "net": self.net_.to_dict(),
                "mse_history": list(self.mse_history_)}

    @classmethod
    def from_dict(cls, d: dict) -> "SparseAutoencoder":
        obj = cls(**d["params"])
        obj.net_ = DenseNet.from_dict(d["net"])
        obj.n_features_in_ = obj.net_.layer_sizes[0]
        obj.mse_history_ = list(d.get("mse_history", []))
        return obj


# Aliases used by the pipeline: a trained estimator is the model.
SaeModel = SparseAutoencoder


def reconstruction_mse(net: DenseNet, X) -> float:
    out = forward(net, X)[0]
    return float(np.mean((out - X) ** 2))


def train_sae(ds: Dataset, cfg: SaeConfig) -> SparseAutoencoder:
    if ds.n and (ds.values.min() < 0 or ds.values.max() > 1):
        raise DataError("train_sae expects data normalized to [0, 1]")
    return SparseAutoencoder.from_config(cfg).fit(ds.values)


def mean_activation(model: SparseAutoencoder, ds: Dataset) -> np.ndarray:
    """Average hidden activation of each unit over all rows of ``ds``."""
    if ds.n == 0:
        raise DataError("mean_activation of an empty dataset")
    return model.transform(ds.values).mean(axis=0)


def encode(model: SparseAutoencoder, ds: Dataset, prefix: str = "h") -> Dataset:
    codes = model.transform(ds.values)
    return Dataset(codes, tuple(f"{prefix}{j}" for j in range(codes.shape[1])), ds.labels, ds.row_ids)


def correlation_matrix(ds) -> np.ndarray:
    """Pearson correlations between columns; constant columns get 0 off the diagonal."""
    X = ds.values if isinstance(ds, Dataset) else np.asarray(ds, dtype=float)
    if X.shape[0] < 2:
        raise DataError("correlation needs at least 2 rows")
    Xc = X - X.mean(axis=0)
    sd = np.sqrt((Xc ** 2).sum(axis=0))
    ok = sd > 0
    Z = np.zeros_like(Xc)
    Z[:, ok] = Xc[:, ok] / sd[ok]
    C = Z.T @ Z
    np.fill_diagonal(C, 1.0)
    return np.clip(C, -1.0, 1.0)


def mean_abs_offdiag(C: np.ndarray) -> float:
    d = C.shape[0]
    if d < 2:
        return 0.0
    mask = ~np.eye(d, dtype=bool)
    return float(np.abs(C[mask]).mean())


def config_dict(cfg: SaeConfig) -> dict:
    return asdict(cfg)
