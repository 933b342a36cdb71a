"""Minimal feed-forward classifier with exact manual gradients.

Double precision throughout; every gradient here is checkable against
central finite differences, which is what the test suite does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Floor for log-probabilities inside the cross entropy; matches the count
# loss clamp so saturated losses stay finite with the descent direction intact.
MIN_PROB = math.exp(-700.0)


@dataclass
class Mlp:
    """Fully connected ReLU net; weights[l] maps width l to width l+1."""

    widths: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, widths, rng: np.random.Generator, dtype=np.float64) -> "Mlp":
        """He-style uniform fan-in initialization, biases at zero.

        float32 is available for speed; gradient-check tolerances and the
        acceptance suite assume the float64 default.
        """
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError("widths must list >= 2 positive layer sizes")
        weights, biases = [], []
        for fan_in, fan_out in zip(widths, widths[1:]):
            bound = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype, copy=False))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(widths=widths, weights=weights, biases=biases)

    @property
    def dtype(self):
        return self.weights[0].dtype

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            widths=self.widths,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def _affine_relu_stack(model: Mlp, X: np.ndarray) -> list[np.ndarray]:
    """Activations per layer; ReLU on all but the final affine output."""
    acts = [X]
    h = X
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if l != last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row softmax with max-shift, safe for logits of any magnitude."""
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def forward(model: Mlp, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(logits, row-softmax probabilities) for a batch."""
    X = np.asarray(X, dtype=model.dtype)
    if X.ndim != 2 or X.shape[1] != model.widths[0]:
        raise ValueError(f"expected features of width {model.widths[0]}")
    logits = _affine_relu_stack(model, X)[-1]
    return logits, softmax(logits)


def penultimate(model: Mlp, X: np.ndarray) -> np.ndarray:
    """Last hidden activation; the embedding space for optional k-NN use."""
    X = np.asarray(X, dtype=model.dtype)
    return _affine_relu_stack(model, X)[-2]


def reweighted_ce(probs: np.ndarray, weights: np.ndarray) -> tuple[float, np.ndarray, bool]:
    """Soft-target cross entropy and its gradient w.r.t. the logits.

    loss = -(1/n) sum_ij w_ij log p_ij with w row-stochastic; the matching
    logit gradient is the classic (probs - weights) / n.  Probabilities that
    underflowed to zero under positive weight are clamped; the returned flag
    reports that saturation.
    """
    probs = np.asarray(probs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if probs.shape != weights.shape:
        raise ValueError("probs and weights must have equal shapes")
    n = probs.shape[0]
    support = weights > 0.0
    saturated = bool(np.any(probs[support] < MIN_PROB))
    logp = np.where(support, np.log(np.maximum(probs, MIN_PROB)), 0.0)
    loss = float(-np.sum(weights * logp) / n)
    grad_logits = (probs - weights) / n
    return loss, grad_logits, saturated


def backward(model: Mlp, X: np.ndarray, grad_logits: np.ndarray) -> list[np.ndarray]:
    """Parameter gradients (same layout as model.parameters())."""
    X = np.asarray(X, dtype=model.dtype)
    acts = _affine_relu_stack(model, X)
    per_layer: list[tuple[np.ndarray, np.ndarray]] = []
    delta = np.asarray(grad_logits, dtype=np.float64)
    for l in range(len(model.weights) - 1, -1, -1):
        per_layer.append((acts[l].T @ delta, delta.sum(axis=0)))
        if l > 0:
            delta = delta @ model.weights[l].T
            delta = np.where(acts[l] > 0.0, delta, 0.0)
    grads: list[np.ndarray] = []
    for w_grad, b_grad in reversed(per_layer):
        grads.append(w_grad)
        grads.append(b_grad)
    return grads


class Sgd:
    """Plain gradient descent; weight decay enters as an L2 gradient term."""

    def __init__(self, lr: float = 1e-3, weight_decay: float = 0.0):
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self, model: Mlp, grads) -> Mlp:
        for p, g in zip(model.parameters(), grads):
            p -= self.lr * (g + self.weight_decay * p)
        return model


class Adam:
    """First/second-moment adaptive update with bias correction."""

    def __init__(
        self,
        lr: float = 1e-3,
        weight_decay: float = 0.0,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, model: Mlp, grads) -> Mlp:
        params = model.parameters()
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.betas
        for i, (p, g) in enumerate(zip(params, grads)):
            g = g + self.weight_decay * p
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            m_hat = self.m[i] / (1.0 - b1**self.t)
            v_hat = self.v[i] / (1.0 - b2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return model


def make_optimizer(name: str, lr: float, weight_decay: float):
    if name == "adam":
        return Adam(lr=lr, weight_decay=weight_decay)
    if name == "sgd":
        return Sgd(lr=lr, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {name!r}")


def save_mlp(model: Mlp, path) -> None:
    """Text checkpoint: width header, then per layer the weight rows and bias.

    Values are written with repr(), so loading restores bitwise-identical
    float64 parameters.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#mlp widths=" + ",".join(str(w) for w in model.widths) + "\n")
        for w, b in zip(model.weights, model.biases):
            for row in w:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
            fh.write(" ".join(repr(float(v)) for v in b) + "\n")


def load_mlp(path) -> Mlp:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#mlp widths="):
            raise ValueError("not an MLP checkpoint: missing '#mlp widths=' header")
        widths = tuple(int(tok) for tok in header.removeprefix("#mlp widths=").split(","))
        weights, biases = [], []
        for fan_in, fan_out in zip(widths, widths[1:]):
            w = np.empty((fan_in, fan_out))
            for r in range(fan_in):
                row = [float(tok) for tok in fh.readline().split()]
                if len(row) != fan_out:
                    raise ValueError("checkpoint row width mismatch")
                w[r] = row
            b = [float(tok) for tok in fh.readline().split()]
            if len(b) != fan_out:
                raise ValueError("checkpoint bias width mismatch")
            weights.append(w)
            biases.append(np.array(b))
        if fh.readline() != "":
            raise ValueError("trailing content after checkpoint parameters")
    return Mlp(widths=widths, weights=weights, biases=biases)
