"""Multilayer perceptron regressor with adam and L-BFGS training.

The loss is ``0.5 * mean((y_hat - y) ** 2)``; the output unit is linear.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import DimensionMismatch, InvalidConfig, NonFiniteLoss

logger = logging.getLogger(__name__)

ACTIVATIONS = ("identity", "logistic", "tanh", "relu")
SCHEDULES = ("constant", "invscaling", "adaptive")
SOLVERS = ("adam", "lbfgs")

BETA1, BETA2, EPS = 0.9, 0.999, 1e-8
LBFGS_MEMORY = 10
NO_CHANGE_EPOCHS = 10
MIN_ADAPTIVE_LR = 1e-6


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "identity":
        return z
    if kind == "logistic":
        return expit(z)
    if kind == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _derivative(kind: str, a: np.ndarray) -> np.ndarray:
    """Activation derivative expressed through the activation output ``a``."""
    if kind == "identity":
        return np.ones_like(a)
    if kind == "logistic":
        return a * (1.0 - a)
    if kind == "tanh":
        return 1.0 - a * a
    return (a > 0).astype(float)


@dataclass
class MlpConfig:
    activation: str = "relu"
    lr_schedule: str = "constant"
    solver: str = "adam"
    hidden_layers: Tuple[int, ...] = (100,)
    seed: int = 0
    max_epochs: int = 500
    initial_lr: float = 1e-3
    tolerance: float = 1e-6
    batch_size: int = 200

    def __post_init__(self):
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)
        if not self.hidden_layers or any(h < 1 for h in self.hidden_layers):
            raise InvalidConfig("hidden_layers must be a non-empty list of positive sizes")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(f"activation {self.activation!r} not in {ACTIVATIONS}")
        if self.lr_schedule not in SCHEDULES:
            raise InvalidConfig(f"lr_schedule {self.lr_schedule!r} not in {SCHEDULES}")
        if self.solver not in SOLVERS:
            raise InvalidConfig(f"solver {self.solver!r} not in {SOLVERS}")
        if not self.initial_lr > 0:
            raise InvalidConfig("initial_lr must be positive")
        if self.max_epochs < 0:
            raise InvalidConfig("max_epochs must be >= 0")
        if self.tolerance < 0:
            raise InvalidConfig("tolerance must be >= 0")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_layers"] = list(self.hidden_layers)
        return d


@dataclass
class Mlp:
    config: MlpConfig
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    loss_history: List[float] = field(default_factory=list)
    lr_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if len(self.weights) != len(self.config.hidden_layers) + 1:
            raise InvalidConfig("layer count does not match hidden_layers")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise InvalidConfig(f"layer {i} weight/bias shapes do not chain")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise InvalidConfig(f"layer {i} input size does not match previous layer")
        if self.weights[-1].shape[1] != 1:
            raise InvalidConfig("output layer must have a single unit")
        if tuple(w.shape[1] for w in self.weights[:-1]) != self.config.hidden_layers:
            raise InvalidConfig("hidden sizes do not match hidden_layers")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.weights, self.biases) for p in pair])

    def set_flat(self, theta: np.ndarray) -> None:
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = theta[pos:pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = theta[pos:pos + b.size].copy()
            pos += b.size

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        return cls(MlpConfig(**d["config"]), d["weights"], d["biases"],
                   list(d.get("loss_history", [])))


def init(config: MlpConfig, input_dim: int) -> Mlp:
    """Glorot-style uniform initialization, deterministic from ``config.seed``."""
    if input_dim < 1:
        raise InvalidConfig("input dimension must be >= 1")
    rng = np.random.default_rng(config.seed)
    sizes = (input_dim,) + config.hidden_layers + (1,)
    gain = 2.0 if config.activation == "logistic" else 6.0
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(gain / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, fan_out))
    return Mlp(config, weights, biases)


def _check_X(mlp: Mlp, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != mlp.input_dim:
        raise DimensionMismatch(f"network expects {mlp.input_dim} inputs, got shape {X.shape}")
    return X


def _forward_pass(mlp: Mlp, X: np.ndarray) -> List[np.ndarray]:
    acts = [X]
    act = mlp.config.activation
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = acts[-1] @ w + b
        acts.append(z if i == last else _activate(act, z))
    return acts


def predict(mlp: Mlp, X) -> np.ndarray:
    X = _check_X(mlp, X)
    return _forward_pass(mlp, X)[-1][:, 0]


def forward(mlp: Mlp, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != mlp.input_dim:
        raise DimensionMismatch(f"network expects {mlp.input_dim} inputs, got shape {x.shape}")
    return float(predict(mlp, x[None, :])[0])


def loss(mlp: Mlp, X, y) -> float:
    X = _check_X(mlp, X)
    r = predict(mlp, X) - np.asarray(y, dtype=float)
    return 0.5 * float(np.mean(r * r))


def gradient(mlp: Mlp, X, y) -> Tuple[List[np.ndarray], List[np.ndarray], float]:
    """Backpropagated gradients of ``0.5 * mean((y_hat - y)**2)``.

    Returns ``(weight_grads, bias_grads, loss)``.
    """
    X = _check_X(mlp, X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] == 0:
        raise DimensionMismatch("gradient needs a non-empty batch")
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows but {y.shape[0]} targets")
    acts = _forward_pass(mlp, X)
    resid = acts[-1][:, 0] - y
    n = X.shape[0]
    delta = resid[:, None] / n
    gw = [None] * len(mlp.weights)
    gb = [None] * len(mlp.weights)
    for i in range(len(mlp.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ mlp.weights[i].T) * _derivative(mlp.config.activation, acts[i])
    return gw, gb, 0.5 * float(np.mean(resid * resid))


def _flat_grad(gw, gb) -> np.ndarray:
    return np.concatenate([p.ravel() for pair in zip(gw, gb) for p in pair])


def train(mlp: Mlp, X, y) -> Mlp:
    """Train a copy of ``mlp`` and return it; the input network is not modified."""
    X = _check_X(mlp, X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1 or y.shape[0] != X.shape[0]:
        raise DimensionMismatch("training needs matching, non-empty X and y")
    net = copy.deepcopy(mlp)
    cfg = net.config
    if cfg.max_epochs == 0:
        return net
    if cfg.solver == "lbfgs":
        _train_lbfgs(net, X, y)
    else:
        _train_adam(net, X, y)
    return net


def _train_lbfgs(net: Mlp, X: np.ndarray, y: np.ndarray) -> None:
    cfg = net.config

    def objective(theta):
        net.set_flat(theta)
        gw, gb, value = gradient(net, X, y)
        if not np.isfinite(value):
            raise NonFiniteLoss("loss diverged during L-BFGS")
        return value, _flat_grad(gw, gb)

    history = []
    res = minimize(objective, net.flat(), jac=True, method="L-BFGS-B",
                   callback=lambda th: history.append(objective(th)[0]),
                   options={"maxiter": cfg.max_epochs, "maxcor": LBFGS_MEMORY,
                            "gtol": cfg.tolerance, "ftol": cfg.tolerance * 1e-3,
                            "maxfun": 20 * cfg.max_epochs + 20})
    net.set_flat(res.x)
    final = loss(net, X, y)
    if not np.isfinite(final):
        raise NonFiniteLoss("L-BFGS ended at a non-finite loss")
    net.loss_history = history or [final]
    net.lr_history = []


def _train_adam(net: Mlp, X: np.ndarray, y: np.ndarray) -> None:
    cfg = net.config
    rng = np.random.default_rng([cfg.seed, 1])
    n = X.shape[0]
    batch = min(cfg.batch_size, n)
    params = net.weights + net.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    lr = cfg.initial_lr
    step = 0
    best = np.inf
    stale = 0
    history, lrs = [], []
    for epoch in range(cfg.max_epochs):
        if cfg.lr_schedule == "invscaling":
            lr = cfg.initial_lr / (epoch + 1) ** 0.5
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            gw, gb, _ = gradient(net, X[idx], y[idx])
            step += 1
            grads = gw + gb
            params = net.weights + net.biases
            corr = np.sqrt(1.0 - BETA2 ** step) / (1.0 - BETA1 ** step)
            for j, (p, g) in enumerate(zip(params, grads)):
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * g
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * g * g
                p -= lr * corr * m[j] / (np.sqrt(v[j]) + EPS)
        current = loss(net, X, y)
        if not np.isfinite(current):
            raise NonFiniteLoss(f"loss diverged at epoch {epoch}")
        history.append(current)
        lrs.append(lr)
        if current > best - cfg.tolerance:
            stale += 1
        else:
            stale = 0
        best = min(best, current)
        if cfg.lr_schedule == "adaptive":
            if stale >= 2:
                lr /= 2.0
                stale = 0
                if lr < MIN_ADAPTIVE_LR:
                    break
        elif stale >= NO_CHANGE_EPOCHS:
            break
    net.loss_history = history
    net.lr_history = lrs


def from_layers(config: MlpConfig, weights: Sequence, biases: Sequence) -> Mlp:
    """Build a network from explicit parameters (e.g. a hand-constructed map)."""
    return Mlp(config, [np.asarray(w, dtype=float) for w in weights],
               [np.asarray(b, dtype=float).ravel() for b in biases])
