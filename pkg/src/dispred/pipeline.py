"""Run configuration, predictor files, and the end-to-end DisPred run.

Every fitted artifact is a file so the CLI subcommands can be mixed and
matched. A *DisPred model directory* holds ``model.dae`` and ``head.json``
(the z_d predictor) and, after ensembling, ``raw.*`` and ``ensemble.json``.
"""
from __future__ import annotations

import json
import logging
import os
import shutil
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import disentangler as dae
from .cohort import (
    LabeledCohort,
    QcThresholds,
    ancestry_strata,
    atomic_write_text,
    heterogeneity_order,
    impute_mean,
    qc_filter,
    stratified_split_indices,
    write_cohort,
)
from .disentangler import TrainConfig
from .ensemble import EnsembleWeights, combine, fit_gradient, fit_grid
from .errors import ConfigError, DataError
from .evalkit import het_sweep, metrics_by_stratum, pca2
from .predictors.adv import fit_adv, load_adv, save_adv
from .predictors.lasso import LassoFit, fit_lasso_cv
from .predictors.linear import LinearModel, fit_linear_head
from .predictors.nn import fit_nn, load_nn, save_nn
from .predictors.prs import load_prs_weights, prs_score, restrict_prs_weights, write_prs_weights_table
from .simdata import SimConfig, simulate, write_prs_weights

log = logging.getLogger(__name__)

BASELINES = ("lasso", "nn", "prs", "adv")


def _reject_unknown(d: dict, allowed, what: str):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")


@dataclass
class RunConfig:
    seed: int = 0
    sim: SimConfig = field(default_factory=SimConfig)
    train: TrainConfig = field(default_factory=TrainConfig.desk)
    qc: QcThresholds = field(default_factory=QcThresholds)
    split: tuple = (0.8, 0.1, 0.1)
    cutoff: float = 0.9
    ensemble: str = "grid"
    baselines: tuple = ("lasso", "prs")
    window: int = 750
    stride: int = 50
    nn: dict = field(default_factory=lambda: {"epochs": 200, "lr": 5e-3, "batch_size": 64})
    adv: dict = field(default_factory=lambda: {"epochs": 100, "lr": 5e-3, "batch_size": 64, "lam_w": 0.1, "critic_steps": 5})

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _reject_unknown(d, [f.name for f in fields(cls)], "run-config")
        cfg = cls()
        for key, value in d.items():
            if key == "sim":
                cfg.sim = SimConfig.from_dict(value)
            elif key == "train":
                cfg.train = TrainConfig.from_dict(value, base=TrainConfig.desk())
            elif key == "qc":
                _reject_unknown(value, [f.name for f in fields(QcThresholds)], "qc")
                cfg.qc = QcThresholds(**value)
            elif key == "nn":
                _reject_unknown(value, ["epochs", "lr", "batch_size", "dropout"], "nn")
                cfg.nn = {**cfg.nn, **value}
            elif key == "adv":
                _reject_unknown(value, ["epochs", "lr", "batch_size", "lam_w", "critic_steps", "gp_weight"], "adv")
                cfg.adv = {**cfg.adv, **value}
            else:
                setattr(cfg, key, tuple(value) if isinstance(value, list) else value)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def with_seed(self, seed: int) -> "RunConfig":
        """One seed drives simulation, splitting and every fit."""
        self.seed = int(seed)
        self.sim.seed = int(seed)
        self.train.seed = int(seed)
        return self

    def validate(self):
        if self.ensemble not in ("grid", "grad"):
            raise ConfigError(f"ensemble must be 'grid' or 'grad', got {self.ensemble!r}")
        bad = set(self.baselines) - set(BASELINES)
        if bad:
            raise ConfigError(f"unknown baselines {sorted(bad)}")
        if len(self.split) != 3:
            raise ConfigError("split needs (train, val, test) fractions")
        if not 0.5 <= self.cutoff < 1.0:
            raise ConfigError("cutoff must lie in [0.5, 1)")
        self.sim.validate()
        self.train.validate()

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "sim": self.sim.to_dict(),
            "train": asdict(self.train),
            "qc": asdict(self.qc),
            "split": list(self.split),
            "cutoff": self.cutoff,
            "ensemble": self.ensemble,
            "baselines": list(self.baselines),
            "window": self.window,
            "stride": self.stride,
            "nn": dict(self.nn),
            "adv": dict(self.adv),
        }


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


def echo_config(out_dir, cfg: RunConfig, command: str, extra: dict | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_json(os.path.join(out_dir, "config.json"), {"command": command, **(extra or {}), "config": cfg.to_dict()})


def copy_atomic(src, dst) -> None:
    tmp = os.fspath(dst) + ".tmp"
    shutil.copyfile(src, tmp)
    os.replace(tmp, dst)


# --- predictors as files -----------------------------------------------------


@dataclass
class DisPredModel:
    """z_d head, optionally ensembled with a raw-dosage predictor."""

    autoencoder: dae.DisentangledModel
    head: LinearModel
    raw: object | None = None
    weights: EnsembleWeights | None = None

    def p_z(self, cohort: LabeledCohort) -> np.ndarray:
        _, z_d = dae.encode(self.autoencoder, cohort.X)
        return self.head.predict(z_d)

    def predict(self, cohort: LabeledCohort) -> np.ndarray:
        p_z = self.p_z(cohort)
        if self.raw is None or self.weights is None:
            return p_z
        return combine(p_z, predict(self.raw, cohort), self.weights)

    def save(self, out_dir, raw_path=None) -> None:
        os.makedirs(out_dir, exist_ok=True)
        dae.save(self.autoencoder, os.path.join(out_dir, "model.dae"))
        atomic_write_text(os.path.join(out_dir, "head.json"), self.head.to_json())
        if raw_path is not None:
            copy_atomic(raw_path, os.path.join(out_dir, "raw" + _suffix(raw_path)))
        if self.weights is not None:
            atomic_write_text(os.path.join(out_dir, "ensemble.json"), self.weights.to_json())


def _suffix(path) -> str:
    name = os.path.basename(os.fspath(path))
    return name[name.index(".") :] if "." in name else ""


def load_predictor(path):
    """Load any fitted predictor from a file or a DisPred model directory."""
    path = os.fspath(path)
    if os.path.isdir(path):
        files = os.listdir(path)
        if "model.dae" not in files or "head.json" not in files:
            raise DataError(f"{path}: model directory needs model.dae and head.json")
        model = DisPredModel(dae.load(os.path.join(path, "model.dae")), _load_json_model(os.path.join(path, "head.json")))
        raw = [f for f in files if f.startswith("raw.") and not f.endswith(".tmp")]
        if "ensemble.json" in files and raw:
            model.raw = load_predictor(os.path.join(path, raw[0]))
            with open(os.path.join(path, "ensemble.json"), encoding="utf-8") as fh:
                model.weights = EnsembleWeights.from_json(fh.read())
        return model
    if not os.path.exists(path):
        raise DataError(f"{path}: no such model file")
    if path.endswith(".json"):
        return _load_json_model(path)
    if path.endswith(".npz"):
        from .predictors.nn import load_stacks

        kind = load_stacks(path)[0]
        return load_nn(path) if kind == "nn" else load_adv(path)
    if path.endswith(".tsv"):
        return load_prs_weights(path)
    if path.endswith(".dae"):
        raise DataError(f"{path}: an autoencoder alone does not predict; fit a head first")
    raise DataError(f"{path}: unrecognised model file")


def _load_json_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc.msg})") from None
    if d.get("kind") == "lasso":
        return LassoFit.from_dict(d).model
    if d.get("kind") == "linear":
        return LinearModel.from_dict(d)
    raise DataError(f"{path}: unknown model kind {d.get('kind')!r}")


def predict(model, cohort: LabeledCohort) -> np.ndarray:
    if isinstance(model, DisPredModel):
        return model.predict(cohort)
    if isinstance(model, LinearModel) and model.role == "z_d":
        raise DataError("a z_d head needs its autoencoder; predict with the model directory")
    if hasattr(model, "betas"):  # PRS weights
        return prs_score(cohort.genotypes, model)
    return model.predict(cohort.X)


def fit_baseline(kind: str, train: LabeledCohort, cfg: RunConfig, out_path, prs_weights=None) -> None:
    if kind == "lasso":
        fit = fit_lasso_cv(train.X, train.y, seed=cfg.seed)
        write_json(out_path, fit.to_dict())
    elif kind == "nn":
        save_nn(fit_nn(train.X, train.y, seed=cfg.seed, **cfg.nn), out_path)
    elif kind == "adv":
        if train.ancestry is None:
            raise DataError("adversarial baseline needs ancestry labels")
        save_adv(fit_adv(train.X, train.y, train.ancestry, seed=cfg.seed, **cfg.adv), out_path)
    elif kind == "prs":
        if prs_weights is None:
            raise DataError("prs baseline needs an effect-size table")
        weights = load_prs_weights(prs_weights)
        kept = restrict_prs_weights(weights, train.genotypes.variant_ids)
        if len(kept.variant_ids) < len(weights.variant_ids):
            log.warning("prs: %d of %d weighted variants absent after QC, dropped", len(weights.variant_ids) - len(kept.variant_ids), len(weights.variant_ids))
        write_prs_weights_table(kept, out_path)
    else:
        raise ConfigError(f"unknown baseline {kind!r}")


BASELINE_FILES = {"lasso": "lasso.json", "nn": "nn.npz", "adv": "adv.npz", "prs": "prs_weights.tsv"}


# --- tabular outputs ---------------------------------------------------------


def scores_tsv(sample_ids, columns: dict) -> str:
    names = list(columns)
    lines = ["\t".join(["sample_id", *names])]
    for i, sid in enumerate(sample_ids):
        lines.append("\t".join([sid, *(repr(float(columns[n][i])) for n in names)]))
    return "\n".join(lines) + "\n"


def read_scores(path) -> tuple[list[str], dict]:
    with open(path, encoding="utf-8") as fh:
        lines = [l for l in fh.read().splitlines() if l.strip()]
    if not lines:
        raise DataError(f"{path}: empty scores file")
    header = lines[0].split("\t")
    if header[0] != "sample_id" or len(header) < 2:
        raise DataError(f"{path}:1: header must be sample_id then score columns")
    ids, cols = [], {h: [] for h in header[1:]}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields")
        ids.append(cells[0])
        try:
            for h, c in zip(header[1:], cells[1:]):
                cols[h].append(float(c))
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric score") from None
    return ids, {h: np.array(v) for h, v in cols.items()}


def align_scores(ids, scores: dict, cohort: LabeledCohort) -> dict:
    pos = {s: i for i, s in enumerate(ids)}
    missing = [s for s in cohort.sample_ids if s not in pos]
    if missing:
        raise DataError(f"scores lack samples: {', '.join(missing[:5])}")
    order = np.array([pos[s] for s in cohort.sample_ids], dtype=int)
    return {k: v[order] for k, v in scores.items()}


def embeddings_tsv(cohort: LabeledCohort, model: dae.DisentangledModel) -> str:
    z_a, z_d = dae.encode(model, cohort.X)
    pa, pd = pca2(z_a), pca2(z_d)
    header = ["sample_id"]
    header += [f"z_a_{k + 1}" for k in range(z_a.shape[1])]
    header += [f"z_d_{k + 1}" for k in range(z_d.shape[1])]
    header += ["pca_a_1", "pca_a_2", "pca_d_1", "pca_d_2", "ancestry_label"]
    labels = cohort.ancestry if cohort.ancestry is not None else ["NA"] * len(cohort)
    lines = ["\t".join(header)]
    for i, sid in enumerate(cohort.sample_ids):
        vals = np.concatenate([z_a[i], z_d[i], pa[i], pd[i]])
        lines.append("\t".join([sid, *(repr(float(v)) for v in vals), str(labels[i])]))
    return "\n".join(lines) + "\n"


def strata_for(cohort: LabeledCohort, cutoff: float) -> np.ndarray:
    if cohort.proportions is None:
        if cohort.ancestry is None:
            return np.array(["ALL"] * len(cohort), dtype=object)
        return cohort.ancestry
    return ancestry_strata(cohort.proportions, cutoff, cohort.proportion_names)


# --- preprocessing and the full run ------------------------------------------


def preprocess(cohort: LabeledCohort, thresholds: QcThresholds):
    """QC on all rows (HWE on controls), then mean imputation."""
    G, report = qc_filter(cohort.genotypes, cohort.y == 0, thresholds)
    return replace(cohort, genotypes=impute_mean(G)), report


def split_cohort(cohort: LabeledCohort, fractions, seed: int):
    return [cohort.subset(idx) for idx in stratified_split_indices(cohort.y, fractions, seed)]


def fit_dispred(train: LabeledCohort, val: LabeledCohort, cfg: RunConfig, raw_model):
    """Train the autoencoder and head, then pick ensemble weights on ``val``."""
    if train.ancestry is None:
        raise DataError("training cohort needs ancestry labels")
    model, history = dae.train_dae(train, val, cfg.train)
    _, z_d = dae.encode(model, train.X)
    dp = DisPredModel(model, fit_linear_head(z_d, train.y))
    p_z, p_x = dp.p_z(val), predict(raw_model, val)
    dp.weights = fit_grid(p_z, p_x, val.y) if cfg.ensemble == "grid" else fit_gradient(p_z, p_x, val.y)
    dp.raw = raw_model
    return dp, history


def run_pipeline(cfg: RunConfig, out_dir, data_prefix=None, prs_weights=None) -> dict:
    """simulate (or load) -> QC -> split -> train -> heads/baselines -> ensemble -> evaluate."""
    from .cohort import load_cohort

    os.makedirs(out_dir, exist_ok=True)
    echo_config(out_dir, cfg, "pipeline", {"data": None if data_prefix is None else os.fspath(data_prefix)})
    data_dir = os.path.join(out_dir, "data")
    os.makedirs(data_dir, exist_ok=True)
    if data_prefix is None:
        cohort, truth = simulate(cfg.sim)
        write_cohort(cohort, os.path.join(data_dir, "cohort"))
        prs_weights = os.path.join(data_dir, "prs_weights.tsv")
        write_prs_weights(truth, cohort.genotypes.variant_ids, prs_weights)
    else:
        cohort = load_cohort(data_prefix)

    cohort, report = preprocess(cohort, cfg.qc)
    atomic_write_text(os.path.join(out_dir, "qc_report.tsv"), report.to_tsv())
    train, val, test = split_cohort(cohort, cfg.split, cfg.seed)

    base_dir = os.path.join(out_dir, "baselines")
    os.makedirs(base_dir, exist_ok=True)
    kinds = [k for k in cfg.baselines if k != "prs" or prs_weights is not None]
    if "lasso" not in kinds:
        kinds.insert(0, "lasso")  # the raw-dosage half of the ensemble
    paths = {}
    for kind in kinds:
        paths[kind] = os.path.join(base_dir, BASELINE_FILES[kind])
        fit_baseline(kind, train, cfg, paths[kind], prs_weights)
    models = {kind: load_predictor(p) for kind, p in paths.items()}

    dp, history = fit_dispred(train, val, cfg, models["lasso"])
    dp.save(os.path.join(out_dir, "dispred"), raw_path=paths["lasso"])
    atomic_write_text(os.path.join(out_dir, "history.tsv"), history.to_tsv())

    scores = {"dispred": dp.predict(test), "z_d_head": dp.p_z(test)}
    scores.update({kind: predict(m, test) for kind, m in models.items()})
    atomic_write_text(os.path.join(out_dir, "scores.tsv"), scores_tsv(test.sample_ids, scores))
    atomic_write_text(os.path.join(out_dir, "embeddings.tsv"), embeddings_tsv(test, dp.autoencoder))

    strata = strata_for(test, cfg.cutoff)
    reports = {name: metrics_by_stratum(s, test.y, strata, model=name) for name, s in scores.items()}
    atomic_write_text(os.path.join(out_dir, "metrics.json"), reports["dispred"].to_json())
    for name, rep in reports.items():
        if name != "dispred":
            atomic_write_text(os.path.join(out_dir, f"metrics_{name}.json"), rep.to_json())

    if test.proportions is not None:
        order, _ = heterogeneity_order(test.proportions)
        window = min(cfg.window, len(test))
        sweep = het_sweep(scores, test.y, order, window=window, stride=cfg.stride)
        atomic_write_text(os.path.join(out_dir, "het_sweep.tsv"), sweep.to_tsv())
    return reports
