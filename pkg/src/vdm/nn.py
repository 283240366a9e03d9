"""Minimal dense networks with manual backpropagation.

Provides the reference downstream classifier, the reconstruction
adversaries' models, and the monotone scalar networks used by the neural
minimizers. Everything is plain numpy with mini-batch SGD; gradients are
exact and checked against finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainSchedule:
    epochs: int = 20
    batch_size: int = 256
    lr: float = 0.01
    lr_decay: float = 0.1
    decay_after_epoch: int = 10
    l2_grid: tuple[float, ...] = (0.0, 1e-5, 1e-4, 1e-3)
    seed: int = 0

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay if epoch >= self.decay_after_epoch else self.lr


class Linear:
    """Affine layer. With squared=True the effective weight is W*W
    (elementwise), keeping it nonnegative for monotone networks."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, squared=False):
        limit = 1.0 / np.sqrt(n_in)
        self.W = rng.uniform(-limit, limit, size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self.squared = squared
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None

    def effective_weight(self):
        return self.W * self.W if self.squared else self.W

    def forward(self, x, train=False):
        self._x = x
        return x @ self.effective_weight() + self.b

    def backward(self, dy):
        d_eff = self._x.T @ dy
        self.dW = d_eff * (2.0 * self.W) if self.squared else d_eff
        self.db = dy.sum(axis=0)
        return dy @ self.effective_weight().T

    def params(self):
        return [(self.W, self.dW, True), (self.b, self.db, False)]


class BatchNorm:
    """Per-feature batch normalization.

    With squared=True the scale is gamma*gamma so normalization never flips
    sign, preserving monotonicity in monotone networks.
    """

    def __init__(self, n: int, squared=False, momentum=0.9, eps=1e-5):
        self.gamma = np.ones(n)
        self.beta = np.zeros(n)
        self.squared = squared
        self.momentum = momentum
        self.eps = eps
        self.run_mean = np.zeros(n)
        self.run_var = np.ones(n)
        self.dgamma = np.zeros(n)
        self.dbeta = np.zeros(n)
        self._cache = None

    def scale(self):
        return self.gamma * self.gamma if self.squared else self.gamma

    def forward(self, x, train=False):
        if train:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.run_mean = self.momentum * self.run_mean + (1 - self.momentum) * mean
            self.run_var = self.momentum * self.run_var + (1 - self.momentum) * var
        else:
            mean, var = self.run_mean, self.run_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, train, x.shape[0])
        return self.scale() * xhat + self.beta

    def backward(self, dy):
        xhat, inv_std, train, m = self._cache
        d_scale = (dy * xhat).sum(axis=0)
        self.dgamma = d_scale * (2.0 * self.gamma) if self.squared else d_scale
        self.dbeta = dy.sum(axis=0)
        dxhat = dy * self.scale()
        if not train:
            return dxhat * inv_std
        return (inv_std / m) * (
            m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )

    def params(self):
        return [(self.gamma, self.dgamma, False), (self.beta, self.dbeta, False)]


class Activation:
    def __init__(self, kind: str):
        assert kind in ("relu", "tanh", "none")
        self.kind = kind
        self._cache = None

    def forward(self, x, train=False):
        if self.kind == "relu":
            self._cache = x > 0
            return x * self._cache
        if self.kind == "tanh":
            out = np.tanh(x)
            self._cache = out
            return out
        return x

    def backward(self, dy):
        if self.kind == "relu":
            return dy * self._cache
        if self.kind == "tanh":
            return dy * (1.0 - self._cache**2)
        return dy

    def params(self):
        return []


class Mlp:
    """Dense net: Linear [+ BatchNorm] + activation per layer."""

    def __init__(self, sizes, activations=None, rng=None, batchnorm=False,
                 squared_weights=False):
        rng = rng if rng is not None else np.random.default_rng(0)
        n_layers = len(sizes) - 1
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + ["none"]
        assert len(activations) == n_layers
        self.layers = []
        for i in range(n_layers):
            self.layers.append(Linear(sizes[i], sizes[i + 1], rng, squared=squared_weights))
            if batchnorm and i < n_layers - 1:
                self.layers.append(BatchNorm(sizes[i + 1], squared=squared_weights))
            self.layers.append(Activation(activations[i]))

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def sgd_step(self, lr: float, l2: float = 0.0):
        for value, grad, is_weight in self.params():
            value -= lr * (grad + (l2 * value if is_weight else 0.0))

    def copy(self) -> "Mlp":
        import copy

        return copy.deepcopy(self)


class MonotoneNet:
    """Scalar [0,1] -> [0,1] network that is non-decreasing by construction:
    squared linear weights, squared batch-norm scales, tanh activations, and
    a final affine squash of tanh into [0, 1]."""

    def __init__(self, hidden=(16,), rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        sizes = [1, *hidden, 1]
        self.layers = []
        for i in range(len(sizes) - 1):
            self.layers.append(Linear(sizes[i], sizes[i + 1], rng, squared=True))
            if i < len(sizes) - 2:
                self.layers.append(BatchNorm(sizes[i + 1], squared=True))
                self.layers.append(Activation("tanh"))
        self.layers.append(Activation("tanh"))

    def forward(self, x, train=False):
        """x: (n, 1) column; returns (n, 1) in [0, 1]."""
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return 0.5 * (x + 1.0)

    def backward(self, dy):
        dy = dy * 0.5
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def sgd_step(self, lr: float, l2: float = 0.0):
        for value, grad, is_weight in self.params():
            value -= lr * (grad + (l2 * value if is_weight else 0.0))


def temperature_softmax(logits: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise softmax of logits/tau, log-sum-exp stabilized."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    a = logits / tau
    a = a - a.max(axis=-1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=-1, keepdims=True)


def temperature_softmax_backward(probs: np.ndarray, dprobs: np.ndarray,
                                 tau: float) -> np.ndarray:
    """Gradient w.r.t. the logits of temperature_softmax."""
    inner = (dprobs * probs).sum(axis=-1, keepdims=True)
    return probs * (dprobs - inner) / tau


def softmax_xent(logits: np.ndarray, y: np.ndarray):
    """Mean cross-entropy of integer labels; returns (loss, dlogits)."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = -logp[np.arange(n), y].mean()
    probs = np.exp(logp)
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    return loss, dlogits / n


def _run_epochs(net: Mlp, x, y, schedule: TrainSchedule, l2: float,
                rng: np.random.Generator):
    n = x.shape[0]
    for epoch in range(schedule.epochs):
        lr = schedule.lr_at(epoch)
        order = rng.permutation(n)
        for start in range(0, n, schedule.batch_size):
            idx = order[start:start + schedule.batch_size]
            logits = net.forward(x[idx], train=True)
            loss, dlogits = softmax_xent(logits, y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            net.backward(dlogits)
            net.sgd_step(lr, l2)


def classification_error(net: Mlp, x, y) -> float:
    pred = net.forward(x).argmax(axis=1)
    return float(np.mean(pred != y))


def train_classifier(x_train, y_train, x_val, y_val, n_classes: int,
                     schedule: TrainSchedule | None = None, hidden=(50,),
                     seed: int | None = None):
    """Cross-entropy training with L2 chosen on validation (ties -> larger L2).

    Returns (net, validation error). Deterministic given the seed: every L2
    candidate restarts from the same initialization and shuffle stream.
    """
    schedule = schedule or TrainSchedule()
    seed = schedule.seed if seed is None else seed
    best = None
    for l2 in schedule.l2_grid:
        rng = np.random.default_rng(seed)
        net = Mlp([x_train.shape[1], *hidden, n_classes], rng=rng)
        _run_epochs(net, x_train, y_train, schedule, l2, rng)
        err = classification_error(net, x_val, y_val) if len(x_val) else 0.0
        if best is None or err <= best[0]:
            best = (err, l2, net)
    return best[2], best[0]
