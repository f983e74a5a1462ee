"""Balding-Nichols admixture simulator.

Allele frequencies drift from an ancestral frequency per population
(Beta with Fst-controlled concentration); individuals mix populations with
Dirichlet proportions; dosages are Binomial(2, mixed frequency). A binary
phenotype comes from a liability threshold over shared causal effects plus
an ancestry-linked confounding term.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .cohort import SUPERPOPS, GenotypeMatrix, LabeledCohort, write_cohort
from .errors import ConfigError
from .nncore import make_rng


@dataclass
class SimConfig:
    n_pops: int = 3
    n_variants: int = 500
    n_samples: int = 3000
    fst: tuple = (0.1, 0.1, 0.1)
    n_causal: int = 30
    effect_scale: float = 0.15
    confound: float = 0.0
    pop_offsets: tuple | None = None  # default: evenly spaced in [-1, 1]
    dirichlet: tuple = (0.2, 0.2, 0.2)
    prevalence: float = 0.3
    pop_names: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        k = self.n_pops
        for name in ("fst", "dirichlet", "pop_offsets", "pop_names"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(v)
                if len(v) == 1 and k > 1 and name != "pop_names":
                    v = v * k
                setattr(self, name, v)

    def validate(self):
        k = self.n_pops
        if k < 2:
            raise ConfigError("need at least two populations")
        if self.n_samples < 2 or self.n_variants < 1:
            raise ConfigError("n_samples must be >= 2 and n_variants >= 1")
        if not 0 <= self.n_causal <= self.n_variants:
            raise ConfigError("n_causal must lie in [0, n_variants]")
        if len(self.fst) != k or not all(0 < f < 1 for f in self.fst):
            raise ConfigError(f"fst needs {k} values in (0,1)")
        if len(self.dirichlet) != k or not all(c > 0 for c in self.dirichlet):
            raise ConfigError(f"dirichlet needs {k} positive values")
        if self.pop_offsets is not None and len(self.pop_offsets) != k:
            raise ConfigError(f"pop_offsets needs {k} values")
        if not 0 < self.prevalence < 1:
            raise ConfigError("prevalence must lie in (0,1)")
        if self.effect_scale < 0:
            raise ConfigError("effect_scale must be non-negative")
        names = self.names()
        if len(names) != k or len(set(names)) != k:
            raise ConfigError(f"pop_names needs {k} distinct names")

    def names(self) -> tuple:
        if self.pop_names is not None:
            return tuple(self.pop_names)
        if self.n_pops <= len(SUPERPOPS):
            return SUPERPOPS[: self.n_pops]
        return tuple(f"P{k + 1}" for k in range(self.n_pops))

    def offsets(self) -> np.ndarray:
        if self.pop_offsets is not None:
            return np.asarray(self.pop_offsets, dtype=np.float64)
        return np.linspace(-1.0, 1.0, self.n_pops)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown simulation keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "SimConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SimTruth:
    ancestral_freq: np.ndarray  # M
    pop_freq: np.ndarray  # K x M
    causal: np.ndarray  # indices
    effects: np.ndarray  # per causal variant
    liability: np.ndarray  # N
    ancestry_effect: np.ndarray = field(default=None)  # N, the confounding term


def simulate(cfg: SimConfig) -> tuple[LabeledCohort, SimTruth]:
    cfg.validate()
    rng = make_rng(cfg.seed, "simulate")
    K, M, N = cfg.n_pops, cfg.n_variants, cfg.n_samples

    p = rng.uniform(0.05, 0.95, size=M)
    F = np.asarray(cfg.fst)[:, None]
    conc = (1.0 - F) / F
    f = rng.beta(p[None, :] * conc, (1.0 - p[None, :]) * conc)
    # keep every population polymorphic enough for Binomial draws
    f = np.clip(f, 1e-6, 1.0 - 1e-6)

    q = rng.dirichlet(np.asarray(cfg.dirichlet, dtype=np.float64), size=N)
    q /= q.sum(axis=1, keepdims=True)
    pi = q @ f
    G = rng.binomial(2, pi).astype(np.float64)

    causal = np.sort(rng.choice(M, size=cfg.n_causal, replace=False))
    effects = rng.standard_normal(cfg.n_causal) * cfg.effect_scale
    pc = p[causal]
    g_std = (G[:, causal] - 2.0 * pc) / np.sqrt(2.0 * pc * (1.0 - pc))
    ancestry_effect = cfg.confound * (q @ cfg.offsets())
    liability = g_std @ effects + ancestry_effect + rng.standard_normal(N)
    threshold = np.quantile(liability, 1.0 - cfg.prevalence)
    y = (liability > threshold).astype(np.float64)

    names = cfg.names()
    width = len(str(N))
    sample_ids = [f"S{i + 1:0{width}d}" for i in range(N)]
    variant_ids = [f"v{j + 1:0{len(str(M))}d}" for j in range(M)]
    ancestry = np.array([names[k] for k in np.argmax(q, axis=1)], dtype=object)
    cohort = LabeledCohort(GenotypeMatrix(sample_ids, variant_ids, G), y, ancestry, q, names)
    truth = SimTruth(p, f, causal, effects, liability, ancestry_effect)
    return cohort, truth


def simulate_cohort(cfg: SimConfig) -> LabeledCohort:
    return simulate(cfg)[0]


def export(cohort: LabeledCohort, out_dir, stem: str = "cohort") -> list[str]:
    """Write ``<stem>.dosage.tsv``, ``.labels.tsv`` and ``.proportions.tsv``."""
    os.makedirs(out_dir, exist_ok=True)
    return write_cohort(cohort, os.path.join(out_dir, stem))


def write_prs_weights(truth: SimTruth, variant_ids, path) -> None:
    """Oracle effect-size table (causal variants only), per-allele scale."""
    from .cohort import atomic_write_text

    p = truth.ancestral_freq[truth.causal]
    beta = truth.effects / np.sqrt(2.0 * p * (1.0 - p))
    lines = ["variant_id\tbeta"]
    lines += [f"{variant_ids[j]}\t{float(b)!r}" for j, b in zip(truth.causal, beta)]
    atomic_write_text(path, "\n".join(lines) + "\n")
