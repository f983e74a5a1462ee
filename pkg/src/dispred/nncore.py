"""Small dense-network kernel with hand-written backward passes.

Everything is float64 numpy. Layers store ``W`` as (out, in) so that the
forward map is ``act(x @ W.T + b)``. Stochastic operations take an explicit
``numpy.random.Generator``; use :func:`make_rng` to derive one.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, LabelError, NumericError, ParameterError


def make_rng(seed: int, stream: str = "") -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed`` and a stream name.

    Distinct stream names give independent sequences for the same seed, so
    shuffling, initialisation and dropout never share draws.
    """
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), zlib.crc32(stream.encode())])
    return np.random.Generator(np.random.Philox(ss))


def as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {x.shape}")
    return x


@dataclass
class Dense:
    """Affine layer ``y = act(x W^T + b)`` with optional inverted dropout."""

    W: np.ndarray
    b: np.ndarray
    relu: bool = False
    dropout: float = 0.0

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator, relu=False, dropout=0.0):
        if n_in < 1 or n_out < 1:
            raise ParameterError(f"layer dims must be >= 1, got ({n_in}, {n_out})")
        if not 0.0 <= dropout < 1.0:
            raise ParameterError(f"dropout must be in [0, 1), got {dropout}")
        W = rng.standard_normal((n_out, n_in)) * np.sqrt(2.0 / n_in)
        return cls(W, np.zeros(n_out), relu=relu, dropout=dropout)

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    def forward(self, x, train=False, rng=None):
        x = as_matrix(x)
        if x.shape[1] != self.n_in:
            raise DimensionError(f"input has {x.shape[1]} columns, layer expects {self.n_in}")
        pre = x @ self.W.T + self.b
        y = np.maximum(pre, 0.0) if self.relu else pre
        mask = None
        if train and self.dropout > 0.0:
            if rng is None:
                raise ParameterError("dropout in train mode needs an rng")
            keep = 1.0 - self.dropout
            mask = (rng.random(y.shape) < keep) / keep
            y = y * mask
        return y, (x, pre, mask)

    def backward(self, cache, dy):
        x, pre, mask = cache
        dy = np.asarray(dy, dtype=np.float64)
        if dy.shape != pre.shape:
            raise DimensionError(f"upstream grad shape {dy.shape} != output shape {pre.shape}")
        if mask is not None:
            dy = dy * mask
        if self.relu:
            dy = dy * (pre > 0)
        dW = dy.T @ x
        db = dy.sum(axis=0)
        dx = dy @ self.W
        return dW, db, dx

    def zero_(self):
        self.W[...] = 0.0
        self.b[...] = 0.0


class Stack:
    """Named, ordered chain of Dense layers."""

    def __init__(self, layers: dict[str, Dense]):
        self.layers = dict(layers)

    def forward(self, x, train=False, rng=None):
        caches = []
        for layer in self.layers.values():
            x, cache = layer.forward(x, train=train, rng=rng)
            caches.append(cache)
        return x, caches

    def backward(self, caches, dy, grads: dict | None = None):
        grads = {} if grads is None else grads
        for (name, layer), cache in zip(reversed(self.layers.items()), reversed(caches)):
            dW, db, dy = layer.backward(cache, dy)
            grads[f"{name}.W"] = dW
            grads[f"{name}.b"] = db
        return grads, dy

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self.layers.items():
            out[f"{name}.W"] = layer.W
            out[f"{name}.b"] = layer.b
        return out


def mse(x, x_hat) -> float:
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise DimensionError(f"mse shape mismatch {x.shape} vs {x_hat.shape}")
    return float(np.mean((x - x_hat) ** 2))


def mse_grad(x, x_hat) -> np.ndarray:
    """Gradient of :func:`mse` with respect to ``x_hat``."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise DimensionError(f"mse shape mismatch {x.shape} vs {x_hat.shape}")
    return 2.0 * (x_hat - x) / x.size


def _check_binary(y):
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all((y == 0.0) | (y == 1.0)):
        raise LabelError("labels must be 0 or 1")
    return y


def bce_with_logits(logit, y) -> float:
    """Mean logistic loss, evaluated as ``max(l, 0) - l*y + log1p(exp(-|l|))``."""
    logit = np.asarray(logit, dtype=np.float64).ravel()
    y = _check_binary(y)
    if logit.shape != y.shape:
        raise DimensionError(f"logit length {logit.size} != label length {y.size}")
    return float(np.mean(np.maximum(logit, 0.0) - logit * y + np.log1p(np.exp(-np.abs(logit)))))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def bce_with_logits_grad(logit, y) -> np.ndarray:
    logit = np.asarray(logit, dtype=np.float64).ravel()
    y = _check_binary(y)
    return (sigmoid(logit) - y) / logit.size


@dataclass
class AdamState:
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """In-place Adam update of every array in ``params`` that has a gradient."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise DimensionError(f"grad for {name} has shape {g.shape}, param {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def grad_check(loss_fn, params: dict, h: float = 1e-5, max_coords: int | None = 40, rng=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn()`` must return ``(loss, grads)`` evaluated at the current
    contents of ``params``; coordinates are perturbed in place and restored.
    At most ``max_coords`` coordinates per array are sampled (all if None).
    """
    rng = make_rng(0, "grad_check") if rng is None else rng
    loss0, grads = loss_fn()
    if not np.isfinite(loss0):
        raise NumericError("loss is not finite")
    grads = {k: np.array(v, copy=True) for k, v in grads.items()}
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        g = grads[name].reshape(-1)
        if max_coords is None or flat.size <= max_coords:
            idx = np.arange(flat.size)
        else:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            fp = loss_fn()[0]
            flat[i] = old - h
            fm = loss_fn()[0]
            flat[i] = old
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"loss not finite while perturbing {name}[{i}]")
            num = (fp - fm) / (2.0 * h)
            err = abs(g[i] - num) / max(1e-12, abs(g[i]) + abs(num))
            worst = max(worst, err)
    return worst
