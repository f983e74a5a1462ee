from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, DimensionError
from ..nncore import as_matrix


@dataclass
class LinearModel:
    coef: np.ndarray
    intercept: float
    role: str = "raw"  # "raw" dosages or "z_d" latents

    def predict(self, X) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != len(self.coef):
            raise DimensionError(f"model expects {len(self.coef)} features, got {X.shape[1]}")
        return X @ self.coef + self.intercept

    def to_dict(self) -> dict:
        return {"kind": "linear", "role": self.role, "intercept": float(self.intercept), "coef": [float(c) for c in self.coef]}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(np.asarray(d["coef"], dtype=np.float64), float(d["intercept"]), d.get("role", "raw"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict()) + "\n"


def fit_linear_head(Z, y, role: str = "z_d") -> LinearModel:
    """Ordinary least squares with an unpenalised intercept.

    A near-singular Gram matrix gets a ridge of 1e-8 * trace / dim.
    """
    Z = as_matrix(Z)
    y = np.asarray(y, dtype=np.float64).ravel()
    if Z.shape[0] != len(y):
        raise DimensionError(f"{Z.shape[0]} rows but {len(y)} targets")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(y))):
        raise DataError("design or target has non-finite values")
    mu, ybar = Z.mean(axis=0), y.mean()
    Zc = Z - mu
    gram = Zc.T @ Zc
    rhs = Zc.T @ (y - ybar)
    d = gram.shape[0]
    try:
        if np.linalg.cond(gram) > 1e12:
            raise np.linalg.LinAlgError
        w = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        jitter = 1e-8 * max(np.trace(gram), 1e-300) / d
        w = np.linalg.solve(gram + jitter * np.eye(d), rhs)
    return LinearModel(w, float(ybar - mu @ w), role)
