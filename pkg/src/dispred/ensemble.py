"""Additive ensemble ``p_e = alpha * p_z + beta * p_x`` and its weight search."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError, UndefinedAUCError
from .evalkit import auc
from .nncore import sigmoid

GRID = tuple(round(0.1 * k, 1) for k in range(1, 16))


@dataclass
class EnsembleWeights:
    alpha: float
    beta: float
    mode: str = "grid"
    val_auc: float | None = None

    def to_json(self) -> str:
        return json.dumps({"alpha": self.alpha, "beta": self.beta, "mode": self.mode}) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EnsembleWeights":
        d = json.loads(text)
        return cls(float(d["alpha"]), float(d["beta"]), d.get("mode", "grid"))


def _pair(p_z, p_x):
    p_z = np.asarray(p_z, dtype=np.float64).ravel()
    p_x = np.asarray(p_x, dtype=np.float64).ravel()
    if p_z.shape != p_x.shape:
        raise DimensionError(f"prediction lengths differ: {p_z.size} vs {p_x.size}")
    return p_z, p_x


def combine(p_z, p_x, w: EnsembleWeights) -> np.ndarray:
    p_z, p_x = _pair(p_z, p_x)
    return w.alpha * p_z + w.beta * p_x


def _check_labels(y):
    y = np.asarray(y).ravel()
    if not ((y == 1).any() and (y != 1).any()):
        raise UndefinedAUCError("validation labels need at least one case and one control")
    return y


def fit_grid(p_z, p_x, y_val) -> EnsembleWeights:
    """Exhaustive 15 x 15 scan; ties keep the first pair in (alpha, beta) order."""
    p_z, p_x = _pair(p_z, p_x)
    y_val = _check_labels(y_val)
    best = None
    for a in GRID:
        for b in GRID:
            value = auc(a * p_z + b * p_x, y_val)
            if best is None or value > best[0]:
                best = (value, a, b)
    return EnsembleWeights(best[1], best[2], "grid", best[0])


def surrogate_loss(params, p_z, p_x, y):
    """Mean logistic loss of ``alpha*p_z + beta*p_x + c`` and its gradient.

    ``c`` is a nuisance offset; it leaves the ranking (and AUC) of the
    ensemble unchanged but keeps the surrogate from trading discrimination
    for calibration.
    """
    alpha, beta, c = params
    s = alpha * p_z + beta * p_x + c
    loss = float(np.mean(np.maximum(s, 0.0) - s * y + np.log1p(np.exp(-np.abs(s)))))
    r = (sigmoid(s) - y) / len(y)
    return loss, np.array([r @ p_z, r @ p_x, r.sum()])


def fit_gradient(p_z, p_x, y_val, init=(1.1, 0.9), epochs=5000, lr=0.01, history=None) -> EnsembleWeights:
    """Full-batch gradient descent on the logistic surrogate.

    Steps are taken in score-standardised coordinates (a diagonal
    preconditioner): raw prediction scores often have a spread of a few
    hundredths, which would leave plain steps of size ``lr`` nearly frozen.
    The returned weights apply to the raw scores.
    """
    p_z, p_x = _pair(p_z, p_x)
    y = _check_labels(y_val).astype(np.float64)
    mu = np.array([p_z.mean(), p_x.mean()])
    sd = np.array([p_z.std(), p_x.std()])
    sd[sd == 0] = 1.0
    q_z, q_x = (p_z - mu[0]) / sd[0], (p_x - mu[1]) / sd[1]
    # same starting ensemble, expressed in standardised coordinates
    params = np.array([init[0] * sd[0], init[1] * sd[1], init[0] * mu[0] + init[1] * mu[1]])
    for _ in range(epochs):
        loss, g = surrogate_loss(params, q_z, q_x, y)
        if not np.isfinite(loss) or not np.all(np.isfinite(g)):
            raise NumericError("ensemble surrogate became non-finite")
        if history is not None:
            history.append(loss)
        params -= lr * g
    alpha, beta = float(params[0] / sd[0]), float(params[1] / sd[1])
    return EnsembleWeights(alpha, beta, "gradient", auc(alpha * p_z + beta * p_x, y))
