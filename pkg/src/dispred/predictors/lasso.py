"""Least-squares Lasso by cyclic coordinate descent, with a CV-selected penalty.

Objective per penalty ``lam``::

    1/(2n) * ||y - b - X w||^2 + lam * ||w||_1      (b unpenalised)

Updates run on the Gram matrix of the centred design, so a sweep costs
O(p) per nonzero update rather than O(n p).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, DimensionError, ParameterError
from ..nncore import as_matrix, make_rng
from .linear import LinearModel


def soft_threshold(x, lam):
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def lambda_max(X, y) -> float:
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    return float(np.max(np.abs(Xc.T @ (y - y.mean()))) / len(y))


def lambda_grid(lam_max: float, n_alphas: int = 10, eps: float = 1e-3) -> np.ndarray:
    if lam_max <= 0:
        return np.zeros(1)
    return np.geomspace(lam_max, lam_max * eps, n_alphas)


def lasso_objective(X, y, coef, intercept, lam) -> float:
    r = np.asarray(y, dtype=np.float64) - intercept - as_matrix(X) @ coef
    return float(r @ r / (2 * len(r)) + lam * np.abs(coef).sum())


class _GramProblem:
    """Centred sufficient statistics for coordinate descent."""

    def __init__(self, X, y):
        self.n = X.shape[0]
        self.x_mean = X.mean(axis=0)
        self.y_mean = y.mean()
        Xc = X - self.x_mean
        yc = y - self.y_mean
        self.G = (Xc.T @ Xc) / self.n
        self.Xty = (Xc.T @ yc) / self.n
        self.yty = float(yc @ yc) / self.n
        self.diag = np.diag(self.G).copy()

    def duality_gap(self, w, lam) -> float:
        # all quantities scaled by 1/n
        Xtr = self.Xty - self.G @ w
        rr = self.yty - 2 * w @ self.Xty + w @ self.G @ w
        ytr = self.yty - w @ self.Xty
        dual_norm = np.max(np.abs(Xtr)) if Xtr.size else 0.0
        s = 1.0 if dual_norm <= lam else lam / dual_norm
        primal = 0.5 * rr + lam * np.abs(w).sum()
        dual = s * ytr - 0.5 * s * s * rr
        return primal - dual

    def solve(self, lam, w, max_iter, tol):
        """Coordinate descent from warm start ``w`` (modified in place)."""
        G, diag = self.G, self.diag
        grad = self.Xty - G @ w  # X^T r / n
        thresh = tol * self.yty
        for it in range(1, max_iter + 1):
            max_delta = 0.0
            max_w = 0.0
            for j in range(len(w)):
                d = diag[j]
                if d == 0.0:
                    continue
                old = w[j]
                rho = grad[j] + d * old
                if rho > lam:
                    new = (rho - lam) / d
                elif rho < -lam:
                    new = (rho + lam) / d
                else:
                    new = 0.0
                if new != old:
                    grad -= G[:, j] * (new - old)
                    w[j] = new
                    max_delta = max(max_delta, abs(new - old))
                max_w = max(max_w, abs(new))
            if max_w == 0.0 or max_delta / max_w < tol:
                if self.duality_gap(w, lam) <= thresh:
                    return it, True
        return max_iter, False


def lasso_path(X, y, lams, max_iter=5000, tol=1e-3):
    """Warm-started path. Returns ``(coefs [len(lams) x p], intercepts, converged)``."""
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    prob = _GramProblem(X, y)
    w = np.zeros(X.shape[1])
    coefs, intercepts, converged = [], [], []
    for lam in lams:
        _, ok = prob.solve(lam, w, max_iter, tol)
        coefs.append(w.copy())
        intercepts.append(prob.y_mean - prob.x_mean @ w)
        converged.append(ok)
    return np.array(coefs), np.array(intercepts), np.array(converged)


def fit_lasso(X, y, lam, max_iter=5000, tol=1e-3) -> LinearModel:
    coefs, b, _ = lasso_path(X, y, [lam], max_iter, tol)
    return LinearModel(coefs[0], float(b[0]), "raw")


@dataclass
class LassoFit:
    model: LinearModel
    alpha: float
    alphas: np.ndarray
    cv_mse: np.ndarray  # folds x alphas
    converged: bool
    path_nnz: list[int] = field(default_factory=list)

    def predict(self, X):
        return self.model.predict(X)

    def to_dict(self) -> dict:
        d = self.model.to_dict()
        d.update(
            kind="lasso",
            alpha=float(self.alpha),
            alphas=[float(a) for a in self.alphas],
            cv_mse=self.cv_mse.tolist(),
            converged=bool(self.converged),
        )
        return d

    @classmethod
    def from_dict(cls, d) -> "LassoFit":
        return cls(LinearModel.from_dict(d), d["alpha"], np.asarray(d["alphas"]), np.asarray(d["cv_mse"]), d["converged"])


def fit_lasso_cv(X, y, n_alphas=10, max_iter=5000, tol=1e-3, folds=5, seed=0) -> LassoFit:
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = X.shape[0]
    if len(y) != n:
        raise DimensionError(f"{n} rows but {len(y)} targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("Lasso input has missing or non-finite values")
    if n < folds:
        raise ParameterError(f"need at least {folds} rows for {folds}-fold CV")
    alphas = lambda_grid(lambda_max(X, y), n_alphas)

    fold_of = np.empty(n, dtype=int)
    fold_of[make_rng(seed, "lasso.cv").permutation(n)] = np.arange(n) % folds
    cv_mse = np.zeros((folds, len(alphas)))
    for k in range(folds):
        tr, te = fold_of != k, fold_of == k
        coefs, b, _ = lasso_path(X[tr], y[tr], alphas, max_iter, tol)
        pred = X[te] @ coefs.T + b
        cv_mse[k] = np.mean((y[te, None] - pred) ** 2, axis=0)
    best = int(np.argmin(cv_mse.mean(axis=0)))

    coefs, b, conv = lasso_path(X, y, alphas[: best + 1], max_iter, tol)
    model = LinearModel(coefs[-1], float(b[-1]), "raw")
    nnz = [int(np.count_nonzero(c)) for c in coefs]
    return LassoFit(model, float(alphas[best]), alphas, cv_mse, bool(conv.all()), nnz)
