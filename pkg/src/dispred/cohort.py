"""Cohort data model, TSV I/O, and the preprocessing steps.

File layout for a cohort stored under a path prefix ``P``::

    P.dosage.tsv       sample_id, then one column per variant (0..2 or NA)
    P.labels.tsv       sample_id, phenotype, [ancestry], [age]
    P.proportions.tsv  sample_id, then one column per superpopulation
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError, ParameterError, RangeError, SplitError

SUPERPOPS = ("EUR", "AFR", "AMR", "EAS", "SAS")
MISSING = "NA"


@dataclass
class GenotypeMatrix:
    sample_ids: list[str]
    variant_ids: list[str]
    dosages: np.ndarray  # N x M, NaN marks missing

    def __post_init__(self):
        self.dosages = np.asarray(self.dosages, dtype=np.float64)
        n, m = self.dosages.shape
        if len(self.sample_ids) != n or len(self.variant_ids) != m:
            raise DataError(f"ids ({len(self.sample_ids)}, {len(self.variant_ids)}) do not match matrix {self.dosages.shape}")
        for kind, ids in (("sample", self.sample_ids), ("variant", self.variant_ids)):
            if len(set(ids)) != len(ids):
                raise DataError(f"duplicate {kind} ids")

    @property
    def shape(self):
        return self.dosages.shape

    def take_rows(self, idx) -> "GenotypeMatrix":
        idx = np.asarray(idx, dtype=int)
        return GenotypeMatrix([self.sample_ids[i] for i in idx], list(self.variant_ids), self.dosages[idx])

    def take_cols(self, idx) -> "GenotypeMatrix":
        idx = np.asarray(idx, dtype=int)
        return GenotypeMatrix(list(self.sample_ids), [self.variant_ids[j] for j in idx], self.dosages[:, idx])


@dataclass
class LabeledCohort:
    genotypes: GenotypeMatrix
    y: np.ndarray
    ancestry: np.ndarray | None = None
    proportions: np.ndarray | None = None
    proportion_names: tuple[str, ...] = SUPERPOPS
    age: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.genotypes.sample_ids)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.y.shape != (n,):
            raise DataError(f"{self.y.shape[0]} phenotype values for {n} samples")
        if self.ancestry is not None:
            self.ancestry = np.asarray(self.ancestry, dtype=object)
            if self.ancestry.shape != (n,):
                raise DataError("ancestry labels not aligned with samples")
        if self.proportions is not None:
            self.proportions = np.asarray(self.proportions, dtype=np.float64)
            if self.proportions.shape != (n, len(self.proportion_names)):
                raise DataError("proportions not aligned with samples/superpopulations")
            bad = np.abs(self.proportions.sum(axis=1) - 1.0) > 1e-6
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise DataError(f"proportions for {self.genotypes.sample_ids[i]} do not sum to 1")
        if self.age is not None:
            self.age = np.asarray(self.age, dtype=np.float64)
            if self.age.shape != (n,):
                raise DataError("age not aligned with samples")

    def __len__(self):
        return len(self.genotypes.sample_ids)

    @property
    def sample_ids(self):
        return self.genotypes.sample_ids

    @property
    def X(self) -> np.ndarray:
        return self.genotypes.dosages

    def subset(self, idx) -> "LabeledCohort":
        idx = np.asarray(idx, dtype=int)
        pick = lambda v: None if v is None else v[idx]  # noqa: E731
        return replace(
            self,
            genotypes=self.genotypes.take_rows(idx),
            y=self.y[idx],
            ancestry=pick(self.ancestry),
            proportions=pick(self.proportions),
            age=pick(self.age),
        )

    def with_genotypes(self, G: GenotypeMatrix) -> "LabeledCohort":
        if G.sample_ids != self.genotypes.sample_ids:
            raise DataError("replacement genotypes have different samples")
        return replace(self, genotypes=G)


# --- I/O ---------------------------------------------------------------------


def _read_rows(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    header = lines[0].split("\t")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, found {len(cells)}")
        rows.append((lineno, cells))
    return header, rows


def load_dosage(path) -> GenotypeMatrix:
    header, rows = _read_rows(path)
    if header[0] != "sample_id":
        raise DataError(f"{path}:1: first column must be sample_id")
    variants = header[1:]
    if len(set(variants)) != len(variants):
        raise DataError(f"{path}:1: duplicate variant ids")
    ids = []
    data = np.empty((len(rows), len(variants)))
    for r, (lineno, cells) in enumerate(rows):
        ids.append(cells[0])
        for c, cell in enumerate(cells[1:]):
            if cell == MISSING:
                data[r, c] = np.nan
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad dosage {cell!r} for {variants[c]}") from None
            if not 0.0 <= v <= 2.0:
                raise RangeError(f"{path}:{lineno}: dosage {v} outside [0,2] at sample {cells[0]}, variant {variants[c]}")
            data[r, c] = v
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise DataError(f"{path}: duplicate sample id {dup}")
    return GenotypeMatrix(ids, variants, data)


def format_number(v: float) -> str:
    if np.isnan(v):
        return MISSING
    if float(v).is_integer():
        return str(int(v))
    return f"{v:.6f}".rstrip("0").rstrip(".")


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_dosage(G: GenotypeMatrix, path) -> None:
    lines = ["\t".join(["sample_id", *G.variant_ids])]
    for sid, row in zip(G.sample_ids, G.dosages):
        lines.append("\t".join([sid, *(format_number(v) for v in row)]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_labels(path) -> dict:
    header, rows = _read_rows(path)
    if header[:2] != ["sample_id", "phenotype"]:
        raise DataError(f"{path}:1: header must start with sample_id, phenotype")
    extra = header[2:]
    unknown = set(extra) - {"ancestry", "age"}
    if unknown:
        raise DataError(f"{path}:1: unknown label columns {sorted(unknown)}")
    out = {"sample_id": [], "phenotype": [], "ancestry": [] if "ancestry" in extra else None, "age": [] if "age" in extra else None}
    for lineno, cells in rows:
        rec = dict(zip(header, cells))
        out["sample_id"].append(rec["sample_id"])
        try:
            out["phenotype"].append(np.nan if rec["phenotype"] == MISSING else float(rec["phenotype"]))
            if out["age"] is not None:
                out["age"].append(np.nan if rec["age"] == MISSING else float(rec["age"]))
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric phenotype or age") from None
        if out["ancestry"] is not None:
            out["ancestry"].append(None if rec["ancestry"] == MISSING else rec["ancestry"])
    return out


def load_proportions(path):
    header, rows = _read_rows(path)
    if header[0] != "sample_id":
        raise DataError(f"{path}:1: first column must be sample_id")
    ids, data = [], np.empty((len(rows), len(header) - 1))
    for r, (lineno, cells) in enumerate(rows):
        ids.append(cells[0])
        try:
            data[r] = [float(c) for c in cells[1:]]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric proportion") from None
        if abs(data[r].sum() - 1.0) > 1e-6 or (data[r] < 0).any():
            raise DataError(f"{path}:{lineno}: proportions must be non-negative and sum to 1")
    return ids, tuple(header[1:]), data


def _align(ids, ref, what):
    pos = {s: i for i, s in enumerate(ids)}
    missing = [s for s in ref if s not in pos]
    if missing:
        raise DataError(f"{what} lacks samples: {', '.join(missing[:5])}")
    return np.array([pos[s] for s in ref], dtype=int)


def load_cohort(prefix) -> LabeledCohort:
    prefix = os.fspath(prefix)
    G = load_dosage(prefix + ".dosage.tsv")
    labels = load_labels(prefix + ".labels.tsv")
    order = _align(labels["sample_id"], G.sample_ids, "labels file")
    y = np.asarray(labels["phenotype"])[order]
    ancestry = None if labels["ancestry"] is None else np.asarray(labels["ancestry"], dtype=object)[order]
    age = None if labels["age"] is None else np.asarray(labels["age"])[order]
    proportions, names = None, SUPERPOPS
    ppath = prefix + ".proportions.tsv"
    if os.path.exists(ppath):
        pids, names, pdata = load_proportions(ppath)
        proportions = pdata[_align(pids, G.sample_ids, "proportions file")]
    return LabeledCohort(G, y, ancestry, proportions, names, age)


def write_cohort(cohort: LabeledCohort, prefix) -> list[str]:
    prefix = os.fspath(prefix)
    paths = [prefix + ".dosage.tsv", prefix + ".labels.tsv"]
    write_dosage(cohort.genotypes, paths[0])
    header = ["sample_id", "phenotype"]
    if cohort.ancestry is not None:
        header.append("ancestry")
    if cohort.age is not None:
        header.append("age")
    lines = ["\t".join(header)]
    for i, sid in enumerate(cohort.sample_ids):
        row = [sid, format_number(cohort.y[i])]
        if cohort.ancestry is not None:
            row.append(MISSING if cohort.ancestry[i] is None else str(cohort.ancestry[i]))
        if cohort.age is not None:
            row.append(format_number(cohort.age[i]))
        lines.append("\t".join(row))
    atomic_write_text(paths[1], "\n".join(lines) + "\n")
    if cohort.proportions is not None:
        paths.append(prefix + ".proportions.tsv")
        lines = ["\t".join(["sample_id", *cohort.proportion_names])]
        for sid, row in zip(cohort.sample_ids, cohort.proportions):
            lines.append("\t".join([sid, *(repr(float(v)) for v in row)]))
        atomic_write_text(paths[2], "\n".join(lines) + "\n")
    return paths


# --- QC and preprocessing ----------------------------------------------------


@dataclass(frozen=True)
class QcThresholds:
    max_missing_rate: float = 0.10
    min_maf: float = 0.01
    hwe_p_floor: float | None = 1e-5

    def __post_init__(self):
        for name in ("max_missing_rate", "min_maf"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0,1], got {v}")
        if self.hwe_p_floor is not None and not 0.0 <= self.hwe_p_floor <= 1.0:
            raise ParameterError(f"hwe_p_floor must lie in [0,1], got {self.hwe_p_floor}")


@dataclass
class QcReport:
    dropped: list[tuple[str, str]] = field(default_factory=list)  # (variant_id, reason)
    kept: int = 0

    def to_tsv(self) -> str:
        return "variant_id\treason\n" + "".join(f"{v}\t{r}\n" for v, r in self.dropped)


def hwe_chi2(counts) -> tuple[float, float]:
    """1-df chi-square HWE test on genotype counts (hom-ref, het, hom-alt)."""
    n0, n1, n2 = (float(c) for c in counts)
    n = n0 + n1 + n2
    if n == 0:
        return 0.0, 1.0
    p = (2 * n0 + n1) / (2 * n)
    expected = (n * p * p, 2 * n * p * (1 - p), n * (1 - p) * (1 - p))
    stat = sum((o - e) ** 2 / e for o, e in zip((n0, n1, n2), expected) if e > 0)
    return stat, math.erfc(math.sqrt(stat / 2.0))


def qc_filter(G: GenotypeMatrix, control_mask, t: QcThresholds = QcThresholds()):
    """Drop variants failing missingness, MAF, or HWE-in-controls thresholds."""
    control_mask = np.asarray(control_mask, dtype=bool)
    if control_mask.shape != (G.shape[0],):
        raise DataError("control mask not aligned with genotype rows")
    if t.hwe_p_floor is not None and not control_mask.any():
        raise ConfigError("HWE filtering requested but there are no controls")
    D = G.dosages
    observed = ~np.isnan(D)
    miss_rate = 1.0 - observed.mean(axis=0)
    report = QcReport()
    keep = []
    controls = D[control_mask]
    for j, vid in enumerate(G.variant_ids):
        if miss_rate[j] > t.max_missing_rate or not observed[:, j].any():
            report.dropped.append((vid, "missing_rate"))
            continue
        freq = np.nanmean(D[:, j]) / 2.0
        if min(freq, 1.0 - freq) < t.min_maf:
            report.dropped.append((vid, "maf"))
            continue
        if t.hwe_p_floor is not None:
            col = controls[:, j]
            g = np.rint(col[~np.isnan(col)]).astype(int)
            _, p = hwe_chi2(np.bincount(g, minlength=3)[:3])
            if p < t.hwe_p_floor:
                report.dropped.append((vid, "hwe"))
                continue
        keep.append(j)
    report.kept = len(keep)
    return G.take_cols(keep), report


def impute_mean(G: GenotypeMatrix) -> GenotypeMatrix:
    D = G.dosages
    miss = np.isnan(D)
    if not miss.any():
        return GenotypeMatrix(list(G.sample_ids), list(G.variant_ids), D.copy())
    all_missing = miss.all(axis=0)
    if all_missing.any():
        bad = [G.variant_ids[j] for j in np.flatnonzero(all_missing)]
        raise DataError(f"variants with no observed dosage: {', '.join(bad[:5])}")
    means = np.nanmean(D, axis=0)
    out = np.where(miss, means[None, :], D)
    return GenotypeMatrix(list(G.sample_ids), list(G.variant_ids), out)


def dichotomize_proxy(scores, threshold: float = 2.0) -> np.ndarray:
    return (np.asarray(scores, dtype=np.float64) >= threshold).astype(np.float64)


def age_filter(cohort: LabeledCohort, min_age: float = 65) -> LabeledCohort:
    """Remove controls younger than ``min_age``; cases are kept regardless."""
    controls = cohort.y == 0
    if cohort.age is None:
        if controls.any():
            raise DataError("age is required for controls")
        return cohort
    if np.isnan(cohort.age[controls]).any():
        raise DataError("age missing for a control participant")
    drop = controls & (cohort.age < min_age)
    return cohort.subset(np.flatnonzero(~drop))


def stratified_split_indices(y, fractions, seed: int) -> list[np.ndarray]:
    from .nncore import make_rng

    fractions = np.asarray(fractions, dtype=np.float64)
    if (fractions <= 0).any() or abs(fractions.sum() - 1.0) > 1e-9:
        raise ParameterError(f"split fractions must be positive and sum to 1, got {fractions.tolist()}")
    rng = make_rng(seed, "split")
    y = np.asarray(y)
    parts = [[] for _ in fractions]
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        if len(members) < len(fractions):
            raise SplitError(f"class {cls!r} has {len(members)} samples, fewer than {len(fractions)} parts")
        members = members[rng.permutation(len(members))]
        # largest-remainder rounding keeps every part within one sample of its share
        exact = fractions * len(members)
        counts = np.floor(exact).astype(int)
        short = len(members) - counts.sum()
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[:short]] += 1
        bounds = np.concatenate([[0], np.cumsum(counts)])
        for k in range(len(fractions)):
            parts[k].append(members[bounds[k] : bounds[k + 1]])
    return [np.sort(np.concatenate(p)) for p in parts]


def stratified_split(cohort: LabeledCohort, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    return [cohort.subset(idx) for idx in stratified_split_indices(cohort.y, fractions, seed)]


def ancestry_stratify(row, cutoff: float, names=SUPERPOPS) -> str:
    """Superpopulation whose proportion strictly exceeds ``cutoff``, else 'MIX'."""
    if cutoff < 0.5:
        raise ParameterError(f"cutoff {cutoff} < 0.5 lets two components pass")
    row = np.asarray(row, dtype=np.float64)
    k = int(np.argmax(row))
    return names[k] if row[k] > cutoff else "MIX"


def ancestry_strata(P, cutoff: float, names=SUPERPOPS) -> np.ndarray:
    return np.array([ancestry_stratify(r, cutoff, names) for r in np.asarray(P)], dtype=object)


def heterogeneity_order(P) -> tuple[np.ndarray, np.ndarray]:
    """Order samples from homogeneous to admixed.

    Returns ``(order, variance)``; ``variance`` is the per-row population
    variance of the ancestry proportions in the original row order.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] < 2:
        raise ParameterError("need at least two ancestry components")
    var = P.var(axis=1)
    return np.argsort(-var, kind="stable"), var
