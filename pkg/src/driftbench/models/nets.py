"""Native scorer families: logistic regression and a small tanh MLP.

Both expose the same three functions over a list of parameter arrays:
``init_params``, ``logits`` and ``loss_grad`` (mean binary cross-entropy
plus optional L2 on weight matrices, with analytic gradients).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset, FeatureView, Standardization, fit_standardization
from ..errors import SchemaError


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(z: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


@dataclass(frozen=True)
class Encoder:
    """Frozen preprocessing: z-scored numericals followed by one-hot categoricals."""

    stats: Standardization
    vocab_sizes: tuple[int, ...]

    @classmethod
    def fit(cls, data: Dataset) -> Encoder:
        return cls(fit_standardization(data.numeric), tuple(data.schema.vocab_sizes))

    @property
    def width(self) -> int:
        return len(self.stats.mean) + sum(self.vocab_sizes)

    def transform(self, rows: Dataset | FeatureView) -> np.ndarray:
        numeric, codes = rows.numeric, rows.codes
        if numeric.shape[1] != len(self.stats.mean) or codes.shape[1] != len(self.vocab_sizes):
            raise SchemaError(
                f"rows have {numeric.shape[1]} numerical/{codes.shape[1]} categorical columns, "
                f"model expects {len(self.stats.mean)}/{len(self.vocab_sizes)}"
            )
        n = numeric.shape[0]
        out = np.zeros((n, self.width))
        p = numeric.shape[1]
        out[:, :p] = self.stats.apply(numeric)
        offset = p
        for j, size in enumerate(self.vocab_sizes):
            c = codes[:, j]
            if np.any((c < 0) | (c >= size)):
                raise SchemaError(f"category code outside vocabulary of size {size}")
            out[np.arange(n), offset + c] = 1.0
            offset += size
        return out


class LogisticRegression:
    family = "logistic_regression"

    def __init__(self, l2: float = 0.0):
        self.l2 = l2

    def init_params(self, n_in: int, rng: np.random.Generator) -> list[np.ndarray]:
        return [np.zeros(n_in), np.zeros(1)]

    def logits(self, params: list[np.ndarray], X: np.ndarray) -> np.ndarray:
        w, b = params
        return X @ w + b[0]

    def loss_grad(self, params, X, y) -> tuple[float, list[np.ndarray]]:
        w, b = params
        z = X @ w + b[0]
        loss = bce_with_logits(z, y) + 0.5 * self.l2 * float(w @ w)
        r = (sigmoid(z) - y) / len(y)
        return loss, [X.T @ r + self.l2 * w, np.array([r.sum()])]


class MLP:
    """Fully connected tanh network with a single logit output."""

    family = "mlp"

    def __init__(self, hidden_sizes: tuple[int, ...] = (32,), l2: float = 0.0):
        self.hidden_sizes = tuple(hidden_sizes)
        self.l2 = l2

    def init_params(self, n_in: int, rng: np.random.Generator) -> list[np.ndarray]:
        sizes = (n_in, *self.hidden_sizes, 1)
        params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            params.append(np.zeros(fan_out))
        return params

    def _forward(self, params, X):
        acts = [X]
        h = X
        n_layers = len(params) // 2
        for k in range(n_layers - 1):
            h = np.tanh(h @ params[2 * k] + params[2 * k + 1])
            acts.append(h)
        z = (h @ params[-2] + params[-1])[:, 0]
        return z, acts

    def logits(self, params, X):
        return self._forward(params, X)[0]

    def loss_grad(self, params, X, y):
        z, acts = self._forward(params, X)
        weights = params[0::2]
        loss = bce_with_logits(z, y) + 0.5 * self.l2 * sum(float(np.sum(W * W)) for W in weights)
        delta = ((sigmoid(z) - y) / len(y))[:, None]
        grads: list[np.ndarray] = [None] * len(params)  # type: ignore[list-item]
        n_layers = len(params) // 2
        for k in range(n_layers - 1, -1, -1):
            W = params[2 * k]
            grads[2 * k] = acts[k].T @ delta + self.l2 * W
            grads[2 * k + 1] = delta.sum(axis=0)
            if k:
                delta = (delta @ W.T) * (1.0 - acts[k] ** 2)
        return loss, grads


def flatten(params: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([p.ravel() for p in params])


def unflatten(flat: np.ndarray, like: list[np.ndarray]) -> list[np.ndarray]:
    out, i = [], 0
    for p in like:
        out.append(flat[i : i + p.size].reshape(p.shape))
        i += p.size
    return out
