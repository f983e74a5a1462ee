"""AUC, per-stratum reports, heterogeneity sweeps, and 2-D projections."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError, UndefinedAUCError


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # boundaries of runs of tied values
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    avg = (starts + ends + 1) / 2.0  # 1-based mean rank of each run
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied case/control pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise DimensionError(f"{scores.size} scores for {labels.size} labels")
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        raise UndefinedAUCError("AUC undefined: labels contain a single class")
    u = _average_ranks(scores)[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


@dataclass
class StratumMetrics:
    name: str
    n: int
    n_case: int
    n_control: int
    auc: float | None


@dataclass
class MetricsReport:
    model: str
    n: int
    n_case: int
    auc: float
    strata: list[StratumMetrics] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "global": {"n": self.n, "n_case": self.n_case, "auc": self.auc},
            "strata": [asdict(s) for s in self.strata],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def stratum(self, name) -> StratumMetrics:
        for s in self.strata:
            if s.name == name:
                return s
        raise KeyError(name)


def metrics_by_stratum(scores, labels, strata, model: str = "model") -> MetricsReport:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    strata = np.asarray(strata, dtype=object)
    if not (scores.shape == labels.shape == strata.shape):
        raise DimensionError("scores, labels and strata must have equal length")
    rows = []
    for name in sorted(set(strata.tolist())):
        m = strata == name
        n_case = int((labels[m] == 1).sum())
        n_ctrl = int(m.sum()) - n_case
        value = auc(scores[m], labels[m]) if n_case and n_ctrl else None
        rows.append(StratumMetrics(str(name), int(m.sum()), n_case, n_ctrl, value))
    return MetricsReport(model, len(labels), int((labels == 1).sum()), auc(scores, labels), rows)


@dataclass
class HetSweep:
    starts: list[int]
    window: int
    auc: dict[str, list]  # model -> per-window AUC or None

    def to_tsv(self) -> str:
        models = list(self.auc)
        lines = ["\t".join(["window_start", "window_end", *models])]
        for w, s in enumerate(self.starts):
            vals = ["NA" if self.auc[m][w] is None else repr(self.auc[m][w]) for m in models]
            lines.append("\t".join([str(s), str(s + self.window), *vals]))
        return "\n".join(lines) + "\n"


def window_starts(n: int, window: int, stride: int) -> list[int]:
    if window < 1 or stride < 1:
        raise ParameterError("window and stride must be positive")
    if window > n:
        raise ParameterError(f"window {window} exceeds sample count {n}")
    return list(range(0, n - window + 1, stride))


def het_sweep(scores_by_model: dict, labels, order, window: int = 750, stride: int = 50) -> HetSweep:
    """Sliding-window AUC along a heterogeneity ordering of the samples."""
    labels = np.asarray(labels)
    order = np.asarray(order, dtype=int)
    n = len(labels)
    if sorted(order.tolist()) != list(range(n)):
        raise ParameterError("order must be a permutation of all samples")
    starts = window_starts(n, window, stride)
    out = {}
    for name, scores in scores_by_model.items():
        s = np.asarray(scores, dtype=np.float64)[order]
        lab = labels[order]
        series = []
        for a in starts:
            wl = lab[a : a + window]
            ok = (wl == 1).any() and (wl != 1).any()
            series.append(auc(s[a : a + window], wl) if ok else None)
        out[name] = series
    return HetSweep(starts, window, out)


def pca2(Z) -> np.ndarray:
    """Project rows onto the top two principal directions.

    Each component's largest-magnitude loading is made positive so the
    output does not depend on the SVD's sign choice.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ParameterError("pca2 needs a 2-D matrix with at least two rows")
    C = Z - Z.mean(axis=0)
    out = np.zeros((Z.shape[0], 2))
    if not np.any(C):
        return out
    _, s, Vt = np.linalg.svd(C, full_matrices=False)
    k = min(2, Vt.shape[0])
    for c in range(k):
        if s[c] <= 0:
            continue
        v = Vt[c]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        out[:, c] = C @ v
    return out


def probe_accuracy(features, labels, seed: int = 0, folds: int = 5) -> float:
    """Cross-validated accuracy of a multinomial logistic-regression probe."""
    from sklearn.linear_model import LogisticRegression
    from sklearn.model_selection import StratifiedKFold, cross_val_score
    from sklearn.pipeline import make_pipeline
    from sklearn.preprocessing import StandardScaler

    probe = make_pipeline(StandardScaler(), LogisticRegression(max_iter=2000))
    cv = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    return float(np.mean(cross_val_score(probe, features, np.asarray(labels), cv=cv)))


def majority_rate(labels) -> float:
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    return float(counts.max() / counts.sum())
