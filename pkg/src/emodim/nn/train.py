"""Losses, Adam, the training loop, and finite-difference gradient checking."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .layers import softmax
from .models import Model


class TrainingDiverged(Exception):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


def mse(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all entries; returns (loss, grad w.r.t. pred)."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if not np.all(np.isfinite(pred)):
        raise ValueError("non-finite prediction")
    diff = pred - target
    loss = float((diff ** 2).mean())
    return loss, 2.0 * diff / diff.size


def cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Mean negative log softmax probability of the true class.

    targets are integer class indices; returns (loss, grad w.r.t. logits).
    """
    logits = np.asarray(logits, dtype=float)
    targets = np.asarray(targets, dtype=int)
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite prediction")
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(n), targets].mean())
    grad = softmax(logits)
    grad[np.arange(n), targets] -= 1.0
    return loss, grad / n


def loss_for_head(head: str):
    return mse if head == "regression" else cross_entropy


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


class Adam:
    def __init__(self, params, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.t = 0

    def step(self):
        self.t += 1
        c = self.cfg
        for p, m, v in zip(self.params, self.m, self.v):
            m *= c.beta1
            m += (1 - c.beta1) * p.grad
            v *= c.beta2
            v += (1 - c.beta2) * p.grad ** 2
            mhat = m / (1 - c.beta1 ** self.t)
            vhat = v / (1 - c.beta2 ** self.t)
            p.value -= c.lr * mhat / (np.sqrt(vhat) + c.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad[:] = 0.0


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    dev_loss: list = field(default_factory=list)
    best_epoch: int = -1


def _eval_loss(model: Model, x, y, loss_fn, batch_size=256) -> float:
    total, n = 0.0, len(x)
    for i in range(0, n, batch_size):
        xb, yb = x[i:i + batch_size], y[i:i + batch_size]
        loss, _ = loss_fn(model.forward(xb, train=False), yb)
        total += loss * len(xb)
    return total / n


def train(model: Model, train_x, train_y, dev_x=None, dev_y=None,
          cfg: TrainConfig | None = None) -> TrainHistory:
    """Mini-batch Adam with early stopping on dev loss.

    Deterministic given cfg.seed.  When a dev set is present the model is
    restored to its best dev-loss epoch; without one training runs all
    epochs.  Raises TrainingDiverged on non-finite loss.
    """
    cfg = cfg or TrainConfig()
    train_x = np.asarray(train_x, dtype=float)
    train_y = np.asarray(train_y)
    if len(train_x) == 0:
        raise ValueError("empty training set")
    has_dev = dev_x is not None and len(dev_x) > 0
    loss_fn = loss_for_head(model.spec.head)

    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, cfg)
    history = TrainHistory()
    best_dev = np.inf
    best_params = None
    bad_epochs = 0

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train_x))
        epoch_loss, seen = 0.0, 0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            opt.zero_grad()
            out = model.forward(train_x[idx], train=True)
            loss, grad = loss_fn(out, train_y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            model.backward(grad)
            opt.step()
            epoch_loss += loss * len(idx)
            seen += len(idx)
        history.train_loss.append(epoch_loss / seen)

        if has_dev:
            dev_loss = _eval_loss(model, np.asarray(dev_x, dtype=float),
                                  np.asarray(dev_y), loss_fn)
            if not np.isfinite(dev_loss):
                raise TrainingDiverged(epoch)
            history.dev_loss.append(dev_loss)
            if dev_loss < best_dev:
                best_dev = dev_loss
                best_params = [p.value.copy() for p in model.params]
                history.best_epoch = epoch
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs > cfg.patience:
                    break
        else:
            history.best_epoch = epoch

    if best_params is not None:
        for p, v in zip(model.params, best_params):
            p.value = v
    return history


def grad_check(model: Model, x, y, eps: float = 1e-4, train: bool = True) -> float:
    """Max relative error between analytic gradients and central differences.

    Relative error per parameter scalar is |a - n| / max(|a|, |n|, 1e-8).
    Intended for small models (a few thousand parameters).
    """
    loss_fn = loss_for_head(model.spec.head)

    def loss_at():
        loss, _ = loss_fn(model.forward(x, train=train), y)
        return loss

    for p in model.params:
        p.grad[:] = 0.0
    out = model.forward(x, train=train)
    loss, grad = loss_fn(out, y)
    model.backward(grad)

    worst = 0.0
    for p in model.params:
        flat = p.value.ravel()
        gflat = p.grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_at()
            flat[i] = orig - eps
            lo = loss_at()
            flat[i] = orig
            numeric = (hi - lo) / (2 * eps)
            analytic = gflat[i]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
