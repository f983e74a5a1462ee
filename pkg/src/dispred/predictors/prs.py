from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cohort import GenotypeMatrix, impute_mean
from ..errors import DataError, MissingVariantError


@dataclass
class PrsWeights:
    variant_ids: list[str]
    betas: np.ndarray

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        if len(set(self.variant_ids)) != len(self.variant_ids):
            raise DataError("duplicate variant ids in PRS weights")
        if len(self.variant_ids) != len(self.betas):
            raise DataError("PRS ids and betas differ in length")
        if not np.all(np.isfinite(self.betas)):
            raise DataError("PRS effect sizes must be finite")


def load_prs_weights(path) -> PrsWeights:
    """Read a TSV with ``variant_id`` and ``beta`` columns; other columns are ignored."""
    with open(path, encoding="utf-8") as fh:
        lines = [l for l in fh.read().splitlines() if l.strip()]
    if not lines:
        raise DataError(f"{path}: empty weights file")
    header = lines[0].split("\t")
    try:
        vi, bi = header.index("variant_id"), header.index("beta")
    except ValueError:
        raise DataError(f"{path}:1: header needs variant_id and beta columns") from None
    ids, betas = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields")
        try:
            betas.append(float(cells[bi]))
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad beta {cells[bi]!r}") from None
        ids.append(cells[vi])
    return PrsWeights(ids, np.array(betas))


def restrict_prs_weights(w: PrsWeights, variant_ids) -> PrsWeights:
    """Keep the weights whose variants are present (e.g. survived QC)."""
    present = set(variant_ids)
    keep = [i for i, v in enumerate(w.variant_ids) if v in present]
    if not keep:
        raise MissingVariantError(w.variant_ids)
    return PrsWeights([w.variant_ids[i] for i in keep], w.betas[keep])


def write_prs_weights_table(w: PrsWeights, path) -> None:
    from ..cohort import atomic_write_text

    lines = ["variant_id\tbeta"] + [f"{v}\t{float(b)!r}" for v, b in zip(w.variant_ids, w.betas)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def prs_score(G: GenotypeMatrix, w: PrsWeights) -> np.ndarray:
    """Dosage-weighted sum of effect sizes; missing dosages are mean-imputed."""
    pos = {v: j for j, v in enumerate(G.variant_ids)}
    missing = [v for v in w.variant_ids if v not in pos]
    if missing:
        raise MissingVariantError(missing)
    cols = np.array([pos[v] for v in w.variant_ids], dtype=int)
    sub = impute_mean(G.take_cols(cols)) if len(cols) else G.take_cols(cols)
    return sub.dosages @ w.betas


@dataclass
class PrsModel:
    weights: PrsWeights

    def predict(self, G: GenotypeMatrix) -> np.ndarray:
        return prs_score(G, self.weights)
