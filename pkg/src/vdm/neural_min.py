"""Neural minimizers: a differentiable per-attribute relaxation of the
generalization map, trained either adversarially (AdvTrain) or with a
mutual-information surrogate (MutualInf), then hardened into a strict map.

Discrete attributes use a small logit network over the one-hot input;
continuous attributes use a monotone scalar network whose output is softly
assigned to equally spaced interval centers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from vdm.dataset import DatasetView
from vdm.generalize import AttrMap, Generalization
from vdm.nn import (
    Mlp,
    MonotoneNet,
    softmax_xent,
    temperature_softmax,
    temperature_softmax_backward,
    TrainingDiverged,
)

LOG_EPS = 1e-12


@dataclass
class NeuralGenConfig:
    k: int = 5  # shared bucket budget per attribute
    tau_start: float = 2.0
    tau_end: float = 0.5
    n_inner: int = 1
    epochs: int = 20
    batch_size: int = 256
    lr: float = 0.01
    lr_decay: float = 0.1
    decay_every: int = 5
    hidden: tuple[int, ...] = (50,)
    mono_hidden: tuple[int, ...] = (16,)
    grid_points: int = 2049  # hardening grid for continuous attributes
    seed: int = 0

    def tau_at(self, epoch: int) -> float:
        """Geometric decay from tau_start to tau_end over the epochs."""
        if self.epochs <= 1:
            return self.tau_end
        frac = epoch / (self.epochs - 1)
        return float(self.tau_start * (self.tau_end / self.tau_start) ** frac)

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch // self.decay_every)


def centers(k: int) -> np.ndarray:
    return (2 * np.arange(1, k + 1) - 1) / (2.0 * k)


class NeuralGeneralizer:
    """One network per feature attribute, producing soft bucket assignments."""

    def __init__(self, schema, config: NeuralGenConfig, rng):
        self.config = config
        self.attrs = [a for a in schema if a.role == "feature"]
        self.nets = {}
        for a in self.attrs:
            if a.kind == "discrete":
                self.nets[a.name] = Mlp([a.cardinality, config.k],
                                        activations=["none"], rng=rng)
            else:
                self.nets[a.name] = MonotoneNet(hidden=config.mono_hidden, rng=rng)
        self._cache = None

    def forward(self, view: DatasetView, rows, tau: float, train=False):
        """Per-attribute bucket probabilities; caches for backward."""
        k = self.config.k
        cs = centers(k)
        probs, caches = [], []
        for a in self.attrs:
            j = next(i for i, s in enumerate(view.schema) if s.name == a.name)
            col = view.values[rows, j]
            net = self.nets[a.name]
            if a.kind == "discrete":
                x = np.zeros((len(rows), a.cardinality))
                x[np.arange(len(rows)), col.astype(int) - 1] = 1.0
                logits = net.forward(x, train=train)
                p = temperature_softmax(logits, tau)
                caches.append(("discrete", net, None))
            else:
                u = net.forward(col[:, None], train=train)
                logits = -((u - cs[None, :]) ** 2)
                p = temperature_softmax(logits, tau)
                caches.append(("continuous", net, u))
            probs.append(p)
        self._cache = (caches, probs, tau)
        return probs

    def backward(self, dprobs: list[np.ndarray]):
        caches, probs, tau = self._cache
        cs = centers(self.config.k)
        for (kind, net, u), p, dp in zip(caches, probs, dprobs):
            dlogits = temperature_softmax_backward(p, dp, tau)
            if kind == "discrete":
                net.backward(dlogits)
            else:
                du = (dlogits * (-2.0 * (u - cs[None, :]))).sum(axis=1, keepdims=True)
                net.backward(du)

    def step(self, lr: float):
        for a in self.attrs:
            self.nets[a.name].sgd_step(lr)

    def harden(self, view: DatasetView) -> Generalization:
        """argmax bucket per original value at the final temperature; unused
        buckets dropped and indices compacted."""
        k = self.config.k
        cs = centers(k)
        maps = {}
        for a in self.attrs:
            net = self.nets[a.name]
            if a.kind == "discrete":
                logits = net.forward(np.eye(a.cardinality))
                raw = logits.argmax(axis=1)  # ties -> lowest bucket
                used = sorted(set(int(b) for b in raw))
                relabel = {b: i + 1 for i, b in enumerate(used)}
                vm = tuple(relabel[int(b)] for b in raw)
                maps[a.name] = AttrMap(a.name, "discrete", len(used), value_map=vm)
            else:
                grid = np.linspace(0.0, 1.0, self.config.grid_points)
                u = net.forward(grid[:, None])[:, 0]
                buckets = np.argmin((u[:, None] - cs[None, :]) ** 2, axis=1)
                ts = []
                for i in np.flatnonzero(np.diff(buckets)):
                    lo, hi = grid[i], grid[i + 1]
                    b_lo = buckets[i]
                    for _ in range(30):  # bisect the bucket boundary
                        mid = (lo + hi) / 2.0
                        um = net.forward(np.array([[mid]]))[0, 0]
                        if np.argmin((um - cs) ** 2) == b_lo:
                            lo = mid
                        else:
                            hi = mid
                    ts.append((lo + hi) / 2.0)
                ts = sorted(set(t for t in ts if 0.0 < t < 1.0))
                maps[a.name] = AttrMap(a.name, "continuous", len(ts) + 1,
                                       thresholds=tuple(ts))
        return Generalization.build(view.schema, maps)


def mutual_info_loss(probs: list[np.ndarray], perm: np.ndarray):
    """Sampled upper bound on I(z; x): per attribute, the mean KL between the
    conditional bucket distribution of a record and that of an independently
    drawn partner (in-batch shuffle). Returns (loss, dprobs)."""
    loss = 0.0
    dprobs = []
    n = probs[0].shape[0]
    for p in probs:
        q = p[perm]
        logp = np.log(np.maximum(p, LOG_EPS))
        logq = np.log(np.maximum(q, LOG_EPS))
        loss += float((p * (logp - logq)).sum() / n)
        dp = (logp + 1.0 - logq) / n
        # p also appears as the partner distribution of rows mapping here
        ratio = np.zeros_like(p)
        np.add.at(ratio, perm, p / np.maximum(q, LOG_EPS))
        dprobs.append(dp - ratio / n)
    return loss, dprobs


def _personal_targets(view: DatasetView, rows):
    """(attribute name, cardinality, 0-based codes) per discrete personal attr."""
    out = []
    for j in view.personal_indices:
        a = view.schema[j]
        if a.kind != "discrete":
            warnings.warn(f"continuous personal attribute {a.name} is not used in "
                          "the adversary loss", stacklevel=2)
            continue
        out.append((a.name, a.cardinality, view.values[rows, j].astype(int) - 1))
    return out


def _fit_neural(view: DatasetView, lam: float, config: NeuralGenConfig,
                use_adversary: bool) -> Generalization:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    rng = np.random.default_rng(config.seed)
    rows = view.rows("train")
    y = view.targets(rows)
    n_classes = view.schema[view.target_index].cardinality
    gen = NeuralGeneralizer(view.schema, config, rng)
    in_width = config.k * len(gen.attrs)
    clf = Mlp([in_width, *config.hidden, n_classes], rng=rng)

    personal = _personal_targets(view, rows)
    if use_adversary:
        if lam > 0 and not personal:
            warnings.warn("no discrete personal attributes: adversary term has no "
                          "signal", stacklevel=2)
        adv = {name: Mlp([in_width, *config.hidden, card], rng=rng)
               for name, card, _ in personal}

    sub = view.take(rows, split_tag="train")
    n = len(rows)
    for epoch in range(config.epochs):
        tau = config.tau_at(epoch)
        lr = config.lr_at(epoch)
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if use_adversary and personal:
                for _ in range(config.n_inner):
                    # inference mode: adversary steps must not touch the
                    # generalizer, including batch-norm running statistics
                    probs = gen.forward(sub, idx, tau, train=False)
                    z = np.concatenate(probs, axis=1)
                    for name, _, codes in personal:
                        logits = adv[name].forward(z, train=True)
                        _, dlogits = softmax_xent(logits, codes[idx])
                        adv[name].backward(dlogits)
                        adv[name].sgd_step(lr)

            probs = gen.forward(sub, idx, tau, train=True)
            z = np.concatenate(probs, axis=1)
            logits = clf.forward(z, train=True)
            loss_clf, dlogits = softmax_xent(logits, y[idx])
            if not np.isfinite(loss_clf):
                raise TrainingDiverged(f"classifier loss diverged at epoch {epoch}")
            dz = clf.backward(dlogits * (1.0 - lam))

            if use_adversary and personal and lam > 0:
                for name, _, codes in personal:
                    a_logits = adv[name].forward(z, train=True)
                    _, da = softmax_xent(a_logits, codes[idx])
                    # maximize adversary loss; phi grads are discarded here
                    dz += adv[name].backward(da * (-lam / len(personal)))
                dprobs = np.split(dz, len(gen.attrs), axis=1)
            elif not use_adversary and lam > 0:
                perm = rng.permutation(len(idx))
                _, d_inf = mutual_info_loss(probs, perm)
                dprobs = [dzi + lam * di
                          for dzi, di in zip(np.split(dz, len(gen.attrs), axis=1), d_inf)]
            else:
                dprobs = np.split(dz, len(gen.attrs), axis=1)

            gen.backward(dprobs)
            gen.step(lr)
            clf.sgd_step(lr)

    return gen.harden(view)


def advtrain_fit(view: DatasetView, lam: float,
                 config: NeuralGenConfig | None = None) -> Generalization:
    """Min-max training: the generalizer and classifier minimize
    (1-lambda)*L_clf - lambda*L_adv against per-attribute adversaries."""
    return _fit_neural(view, lam, config or NeuralGenConfig(), use_adversary=True)


def mutualinf_fit(view: DatasetView, lam: float,
                  config: NeuralGenConfig | None = None) -> Generalization:
    """Adversary-free variant: (1-lambda)*L_clf + lambda*L_inf with a sampled
    mutual-information upper bound."""
    return _fit_neural(view, lam, config or NeuralGenConfig(), use_adversary=False)
