"""Softmax classifiers on a flat parameter vector with hand-written
gradients: multinomial logistic regression and a one-hidden-layer MLP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Model:
    """``hidden == ()`` is logistic regression; ``hidden == (H,)`` an MLP."""

    in_dim: int
    num_classes: int
    hidden: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if len(self.hidden) > 1:
            raise ValueError("only one hidden layer is supported")

    @property
    def arch(self) -> str:
        return "mlp" if self.hidden else "logreg"

    def shapes(self) -> list[tuple[int, ...]]:
        if not self.hidden:
            return [(self.num_classes, self.in_dim), (self.num_classes,)]
        h = self.hidden[0]
        return [(h, self.in_dim), (h,), (self.num_classes, h), (self.num_classes,)]

    @property
    def dim(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes())

    def unflatten(self, w: np.ndarray) -> list[np.ndarray]:
        if w.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} parameters, got {w.shape}")
        out, pos = [], 0
        for s in self.shapes():
            size = int(np.prod(s))
            out.append(w[pos : pos + size].reshape(s))
            pos += size
        return out

    def init(self, rng: np.random.Generator) -> np.ndarray:
        if not self.hidden:
            return np.zeros(self.dim)
        h = self.hidden[0]
        w1 = rng.normal(scale=np.sqrt(2.0 / self.in_dim), size=(h, self.in_dim))
        w2 = rng.normal(scale=np.sqrt(1.0 / h), size=(self.num_classes, h))
        return np.concatenate([w1.ravel(), np.zeros(h), w2.ravel(), np.zeros(self.num_classes)])

    def logits(self, w: np.ndarray, X: np.ndarray) -> np.ndarray:
        ps = self.unflatten(w)
        if not self.hidden:
            return X @ ps[0].T + ps[1]
        a = np.maximum(X @ ps[0].T + ps[1], 0.0)
        return a @ ps[2].T + ps[3]

    def predict(self, w: np.ndarray, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(w, X), axis=1)

    def accuracy(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        if len(y) == 0:
            return float("nan")
        return float(np.mean(self.predict(w, X) == y))

    def loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        z = self.logits(w, X)
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return float(-logp[np.arange(len(y)), y].mean())

    def loss_and_grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
        """Mean softmax cross-entropy and its gradient."""
        ps = self.unflatten(w)
        m = len(y)
        if not self.hidden:
            z = X @ ps[0].T + ps[1]
        else:
            pre = X @ ps[0].T + ps[1]
            a = np.maximum(pre, 0.0)
            z = a @ ps[2].T + ps[3]
        z = z - z.max(axis=1, keepdims=True)
        ez = np.exp(z)
        prob = ez / ez.sum(axis=1, keepdims=True)
        loss = float(-np.log(prob[np.arange(m), y]).mean())
        dz = prob
        dz[np.arange(m), y] -= 1.0
        dz /= m
        if not self.hidden:
            return loss, np.concatenate([(dz.T @ X).ravel(), dz.sum(axis=0)])
        g_w2 = dz.T @ a
        g_b2 = dz.sum(axis=0)
        da = dz @ ps[2]
        dpre = da * (pre > 0)
        g_w1 = dpre.T @ X
        g_b1 = dpre.sum(axis=0)
        return loss, np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])


def local_train(
    model: Model,
    w: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    lr: float,
    rng: np.random.Generator,
    local_iters: int = 1,
    batch: int = 64,
) -> np.ndarray:
    """``local_iters`` minibatch SGD steps from ``w``; returns the change in
    parameters."""
    cur = np.array(w, dtype=float, copy=True)
    if len(y) == 0:
        return np.zeros_like(cur)
    for _ in range(local_iters):
        if len(y) > batch:
            idx = rng.choice(len(y), size=batch, replace=False)
        else:
            idx = np.arange(len(y))
        _, g = model.loss_and_grad(cur, X[idx], y[idx])
        cur -= lr * g
    return cur - w
