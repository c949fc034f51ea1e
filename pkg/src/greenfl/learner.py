"""Small MLP classifier over flat weight vectors.

One hidden tanh layer, softmax cross-entropy loss. Weights live in a
single flat float64 vector so federated averaging is plain arithmetic.
Gradients are analytic; tests check them against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GreenFLError
from .seeding import rng_for

HIDDEN_UNITS = 32


class ShapeMismatch(GreenFLError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Network shape: input width and number of output classes."""

    n_features: int
    n_classes: int
    hidden: int = HIDDEN_UNITS

    def __post_init__(self) -> None:
        if self.n_features < 1 or self.n_classes < 2 or self.hidden < 1:
            raise ShapeMismatch(f"bad model shape {self}")

    @property
    def n_weights(self) -> int:
        return (self.n_features + 1) * self.hidden + (self.hidden + 1) * self.n_classes

    def unpack(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        if w.shape != (self.n_weights,):
            raise ShapeMismatch(f"expected {self.n_weights} weights, got {w.shape}")
        f, h, c = self.n_features, self.hidden, self.n_classes
        ofs = 0
        w1 = w[ofs : ofs + f * h].reshape(f, h)
        ofs += f * h
        b1 = w[ofs : ofs + h]
        ofs += h
        w2 = w[ofs : ofs + h * c].reshape(h, c)
        ofs += h * c
        b2 = w[ofs : ofs + c]
        return w1, b1, w2, b2


def init_weights(spec: ModelSpec, seed: int) -> np.ndarray:
    """Scaled-Gaussian init; biases start at zero."""
    rng = rng_for(seed, "init-weights")
    f, h, c = spec.n_features, spec.hidden, spec.n_classes
    w1 = rng.standard_normal(f * h) / np.sqrt(f)
    w2 = rng.standard_normal(h * c) / np.sqrt(h)
    return np.concatenate([w1, np.zeros(h), w2, np.zeros(c)])


def _forward(spec: ModelSpec, w: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w1, b1, w2, b2 = spec.unpack(w)
    hidden = np.tanh(x @ w1 + b1)
    logits = hidden @ w2 + b2
    return hidden, logits


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(spec: ModelSpec, w: np.ndarray, x: np.ndarray) -> np.ndarray:
    _, logits = _forward(spec, w, x)
    return _softmax(logits)


def predict(spec: ModelSpec, w: np.ndarray, x: np.ndarray) -> np.ndarray:
    return predict_proba(spec, w, x).argmax(axis=1)


def loss(spec: ModelSpec, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """Mean softmax cross-entropy over the batch."""
    if len(x) == 0:
        raise ShapeMismatch("cannot evaluate loss on an empty batch")
    p = predict_proba(spec, w, x)
    picked = np.clip(p[np.arange(len(y)), y], 1e-12, None)
    return float(-np.log(picked).mean())


def accuracy(spec: ModelSpec, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    if len(x) == 0:
        raise ShapeMismatch("cannot evaluate accuracy on an empty batch")
    return float((predict(spec, w, x) == y).mean())


def gradient(spec: ModelSpec, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Analytic gradient of `loss` w.r.t. the flat weight vector."""
    if len(x) == 0:
        raise ShapeMismatch("cannot take a gradient on an empty batch")
    n = len(x)
    w1, b1, w2, b2 = spec.unpack(w)
    hidden = np.tanh(x @ w1 + b1)
    p = _softmax(hidden @ w2 + b2)

    d_logits = p.copy()
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n

    g_w2 = hidden.T @ d_logits
    g_b2 = d_logits.sum(axis=0)
    d_hidden = (d_logits @ w2.T) * (1.0 - hidden**2)
    g_w1 = x.T @ d_hidden
    g_b1 = d_hidden.sum(axis=0)
    return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])


def sgd_epoch(
    spec: ModelSpec,
    w: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """One pass of minibatch SGD over a shuffled copy of the data."""
    order = rng.permutation(len(x))
    out = w.copy()
    for start in range(0, len(x), batch_size):
        idx = order[start : start + batch_size]
        out -= lr * gradient(spec, out, x[idx], y[idx])
    return out
