"""Dense sigmoid networks: forward pass, backprop, momentum SGD, gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

LOSSES = ("mse", "cross_entropy")
_EPS = 1e-12
RHO_CLAMP = 1e-6


class TrainingError(RuntimeError):
    pass


def sigmoid(z):
    return expit(z)


@dataclass
class DenseNet:
    """Fully connected net with sigmoid on every layer.

    ``weights[l]`` has shape ``(layer_sizes[l], layer_sizes[l + 1])``.
    """

    layer_sizes: tuple
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias vector per layer transition")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[l], self.layer_sizes[l + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ValueError(f"layer {l}: weight {w.shape} / bias {b.shape}, expected {shape}")

    @classmethod
    def initialize(cls, layer_sizes: Sequence[int], init_std: float = 0.01, seed: int = 0) -> "DenseNet":
        """Zero-mean normal weights with ``init_std``, zero biases."""
        rng = np.random.default_rng(seed)
        sizes = tuple(layer_sizes)
        weights = [rng.normal(0.0, init_std, size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(b) for b in sizes[1:]]
        return cls(sizes, weights, biases)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "DenseNet":
        return DenseNet(self.layer_sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def predict(self, X) -> np.ndarray:
        return forward(self, X)[0]

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": "sigmoid",
            "weights": [w.ravel(order="C").tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        sizes = d["layer_sizes"]
        weights = [np.asarray(w, dtype=float).reshape(a, b) for w, a, b in zip(d["weights"], sizes[:-1], sizes[1:])]
        return cls(sizes, weights, [np.asarray(b, dtype=float) for b in d["biases"]])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.5
    epochs: int = 100
    batch_size: int = 100
    seed: int = 0
    init_std: float = 0.01

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs >= 0 and batch_size >= 1 required")
        if self.init_std < 0:
            raise ValueError("init_std must be nonnegative")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class Sparsity:
    """KL sparsity penalty on the first hidden layer: beta * sum_j KL(rho || rho_hat_j)."""

    rho: float = 0.05
    beta: float = 3.0


def forward(net: DenseNet, x) -> tuple[np.ndarray, list]:
    """Return (output, activations) where activations[0] is the input."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != net.layer_sizes[0]:
        raise ValueError(f"input has {a.shape[1]} features, net expects {net.layer_sizes[0]}")
    acts = [a]
    for w, b in zip(net.weights, net.biases):
        a = sigmoid(a @ w + b)
        acts.append(a)
    out = a[0] if single else a
    return out, acts


def kl_divergence(rho: float, rho_hat: np.ndarray) -> np.ndarray:
    rho_hat = np.clip(rho_hat, RHO_CLAMP, 1 - RHO_CLAMP)
    return rho * np.log(rho / rho_hat) + (1 - rho) * np.log((1 - rho) / (1 - rho_hat))


def loss_value(out: np.ndarray, T: np.ndarray, loss: str) -> float:
    m = out.shape[0]
    if loss == "mse":
        return float(0.5 * np.sum((out - T) ** 2) / m)
    if loss == "cross_entropy":
        o = np.clip(out, _EPS, 1 - _EPS)
        return float(-np.sum(T * np.log(o) + (1 - T) * np.log(1 - o)) / m)
    raise ValueError(f"unknown loss {loss!r}; expected one of {LOSSES}")


def loss_and_gradients(net: DenseNet, X, T, loss: str, sparsity: Optional[Sparsity] = None):
    """Objective and its gradient w.r.t. [W0, b0, W1, b1, ...].

    mse is 1/(2m) sum ||out - t||^2, cross_entropy is the mean over rows of
    summed per-unit binary cross-entropy. ``sparsity`` adds the KL penalty
    on the first hidden layer.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    T = np.atleast_2d(np.asarray(T, dtype=float))
    out, acts = forward(net, X)
    m = X.shape[0]
    J = loss_value(out, T, loss)
    if loss == "mse":
        delta = (out - T) * out * (1 - out) / m
    else:
        delta = (out - T) / m
    sp_term = None
    if sparsity is not None:
        rho_hat = acts[1].mean(axis=0)
        J += sparsity.beta * float(np.sum(kl_divergence(sparsity.rho, rho_hat)))
        clipped = np.clip(rho_hat, RHO_CLAMP, 1 - RHO_CLAMP)
        sp_term = sparsity.beta * (-sparsity.rho / clipped + (1 - sparsity.rho) / (1 - clipped))
    grads = [None] * (2 * len(net.weights))
    for l in range(len(net.weights) - 1, -1, -1):
        grads[2 * l] = acts[l].T @ delta
        grads[2 * l + 1] = delta.sum(axis=0)
        if l > 0:
            a = acts[l]
            back = delta @ net.weights[l].T
            if l == 1 and sp_term is not None:
                back = back + sp_term / m
            delta = back * a * (1 - a)
    return J, grads


def train(net: DenseNet, inputs, targets, loss: str, cfg: TrainConfig,
          sparsity: Optional[Sparsity] = None, callback=None) -> tuple[DenseNet, list]:
    """Mini-batch momentum SGD. Returns a trained copy and the per-epoch loss.

    The loss recorded for an epoch is the full-data objective after that
    epoch's updates. ``callback(epoch, net)`` runs after each epoch.
    """
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}; expected one of {LOSSES}")
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    T = np.asarray(targets, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    if X.shape[0] != T.shape[0]:
        raise ValueError(f"{X.shape[0]} input rows but {T.shape[0]} target rows")
    if X.shape[1] != net.layer_sizes[0] or T.shape[1] != net.layer_sizes[-1]:
        raise ValueError(f"shapes {X.shape}/{T.shape} do not match net {net.layer_sizes}")
    net = net.copy()
    params = net.params()
    velocity = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        if cfg.learning_rate > 0:
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                _, grads = loss_and_gradients(net, X[idx], T[idx], loss, sparsity)
                for p, v, g in zip(params, velocity, grads):
                    v *= cfg.momentum
                    v -= cfg.learning_rate * g
                    p += v
        J = full_objective(net, X, T, loss, sparsity)
        if not np.isfinite(J):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        history.append(J)
        if callback is not None:
            callback(epoch, net)
    return net, history


def full_objective(net: DenseNet, X, T, loss: str, sparsity: Optional[Sparsity] = None) -> float:
    out, acts = forward(net, X)
    J = loss_value(out, np.atleast_2d(T), loss)
    if sparsity is not None:
        J += sparsity.beta * float(np.sum(kl_divergence(sparsity.rho, acts[1].mean(axis=0))))
    return J


def gradient_check(net: DenseNet, x, target, loss: str, sparsity: Optional[Sparsity] = None,
                   step: float = 1e-5) -> float:
    """Max relative error between backprop and central differences over all parameters.

    Relative error is |a - n| / max(|a| + |n|, 1e-6), so exactly-zero gradients
    compare as agreement rather than 0/0.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    T = np.atleast_2d(np.asarray(target, dtype=float))
    _, analytic = loss_and_gradients(net, X, T, loss, sparsity)
    probe = net.copy()
    worst = 0.0
    for p, g in zip(probe.params(), analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = full_objective(probe, X, T, loss, sparsity)
            flat[i] = orig - step
            down = full_objective(probe, X, T, loss, sparsity)
            flat[i] = orig
            num = (up - down) / (2 * step)
            err = abs(gflat[i] - num) / max(abs(gflat[i]) + abs(num), 1e-6)
            worst = max(worst, err)
    return worst


def numeric_gradient_norm(net: DenseNet, x, target, loss: str, step: float = 1e-5) -> float:
    X = np.atleast_2d(np.asarray(x, dtype=float))
    T = np.atleast_2d(np.asarray(target, dtype=float))
    probe = net.copy()
    total = 0.0
    for p in probe.params():
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = full_objective(probe, X, T, loss)
            flat[i] = orig - step
            down = full_objective(probe, X, T, loss)
            flat[i] = orig
            total += ((up - down) / (2 * step)) ** 2
    return float(np.sqrt(total))
