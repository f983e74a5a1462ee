"""Command-line entry point: ``dispred <subcommand> [flags]``.

Exit codes: 0 success, 1 usage, 2 data/format error, 3 numeric failure.
Failures print a single line to stderr::

    dispred: error code=2 kind=data type=UndefinedAUCError message="..."
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import disentangler as dae
from . import pipeline as pl
from .cohort import atomic_write_text, heterogeneity_order, load_cohort, write_cohort
from .errors import DataError, DispredError
from .evalkit import het_sweep, metrics_by_stratum
from .predictors.linear import fit_linear_head

EXIT = {"usage": 1, "data": 2, "numeric": 3}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p):
    p.add_argument("--config", help="JSON run configuration (unknown keys are rejected)")
    p.add_argument("--seed", type=int, help="overrides the configuration seed")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dispred", description="Disentangled genetic risk prediction.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a synthetic admixed cohort")
    _common(p)

    p = sub.add_parser("qc", help="variant QC (missingness, MAF, HWE in controls) and mean imputation")
    _common(p)
    p.add_argument("--data", required=True, metavar="PREFIX")

    p = sub.add_parser("split", help="phenotype-stratified train/val/test split")
    _common(p)
    p.add_argument("--data", required=True, metavar="PREFIX")

    p = sub.add_parser("train-dae", help="train the disentangling autoencoder")
    _common(p)
    p.add_argument("--data", required=True, metavar="PREFIX", help="training cohort")
    p.add_argument("--val", metavar="PREFIX", help="validation cohort for the AUC trace")

    p = sub.add_parser("embed", help="export latents and their 2-D projections")
    _common(p)
    p.add_argument("--model", required=True, help="model.dae or a model directory")
    p.add_argument("--data", required=True, metavar="PREFIX")

    p = sub.add_parser("fit-head", help="least-squares head on z_d")
    _common(p)
    p.add_argument("--model", required=True, help="model.dae")
    p.add_argument("--data", required=True, metavar="PREFIX")

    p = sub.add_parser("fit-baseline", help="fit a comparison model")
    p.add_argument("kind", choices=pl.BASELINES)
    _common(p)
    p.add_argument("--data", required=True, metavar="PREFIX")
    p.add_argument("--weights", help="effect-size TSV (prs only)")

    p = sub.add_parser("fit-ensemble", help="choose ensemble weights on validation data")
    p.add_argument("mode", choices=("grid", "grad"))
    _common(p)
    p.add_argument("--model", required=True, help="directory with model.dae and head.json")
    p.add_argument("--raw", required=True, help="raw-dosage predictor file (e.g. lasso.json)")
    p.add_argument("--data", required=True, metavar="PREFIX", help="validation cohort")

    p = sub.add_parser("predict", help="score a cohort")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, metavar="PREFIX")
    p.add_argument("--name", default="score", help="score column name")

    p = sub.add_parser("evaluate", help="AUC overall and per ancestry stratum")
    _common(p)
    p.add_argument("--scores", required=True, help="scores.tsv from predict")
    p.add_argument("--data", required=True, metavar="PREFIX")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--column", help="score column (default: first)")

    p = sub.add_parser("het-sweep", help="sliding-window AUC from homogeneous to admixed")
    _common(p)
    p.add_argument("--scores", required=True, nargs="+", help="one or more scores.tsv files")
    p.add_argument("--data", required=True, metavar="PREFIX")
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)

    p = sub.add_parser("pipeline", help="simulate (or load) through evaluation in one run")
    _common(p)
    p.add_argument("--data", metavar="PREFIX", help="use this cohort instead of simulating")
    p.add_argument("--weights", help="effect-size TSV for the prs baseline")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    return parser


def _config(args) -> pl.RunConfig:
    cfg = pl.RunConfig.from_file(args.config) if args.config else pl.RunConfig()
    if args.seed is not None:
        cfg.with_seed(args.seed)
    else:
        cfg.with_seed(cfg.seed)
    for flag in ("cutoff", "window", "stride"):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, flag, value)
    cfg.validate()
    return cfg


def _out(args) -> str:
    if not args.out:
        raise UsageError("--out is required")
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _args_record(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("config", "verbose", "func")}


def cmd_simulate(args, cfg):
    out = _out(args)
    from .simdata import export, simulate, write_prs_weights

    cohort, truth = simulate(cfg.sim)
    export(cohort, out)
    write_prs_weights(truth, cohort.genotypes.variant_ids, os.path.join(out, "prs_weights.tsv"))


def cmd_qc(args, cfg):
    out = _out(args)
    cohort, report = pl.preprocess(load_cohort(args.data), cfg.qc)
    write_cohort(cohort, os.path.join(out, "cohort"))
    atomic_write_text(os.path.join(out, "qc_report.tsv"), report.to_tsv())


def cmd_split(args, cfg):
    out = _out(args)
    for name, part in zip(("train", "val", "test"), pl.split_cohort(load_cohort(args.data), cfg.split, cfg.seed)):
        write_cohort(part, os.path.join(out, name))


def cmd_train_dae(args, cfg):
    out = _out(args)
    train = load_cohort(args.data)
    val = load_cohort(args.val) if args.val else None
    model, history = dae.train_dae(train, val, cfg.train)
    dae.save(model, os.path.join(out, "model.dae"))
    atomic_write_text(os.path.join(out, "history.tsv"), history.to_tsv())


def _autoencoder(path):
    if os.path.isdir(path):
        path = os.path.join(path, "model.dae")
    return dae.load(path)


def cmd_embed(args, cfg):
    out = _out(args)
    text = pl.embeddings_tsv(load_cohort(args.data), _autoencoder(args.model))
    atomic_write_text(os.path.join(out, "embeddings.tsv"), text)


def cmd_fit_head(args, cfg):
    out = _out(args)
    model = _autoencoder(args.model)
    train = load_cohort(args.data)
    _, z_d = dae.encode(model, train.X)
    pl.DisPredModel(model, fit_linear_head(z_d, train.y)).save(out)


def cmd_fit_baseline(args, cfg):
    out = _out(args)
    pl.fit_baseline(args.kind, load_cohort(args.data), cfg, os.path.join(out, pl.BASELINE_FILES[args.kind]), args.weights)


def cmd_fit_ensemble(args, cfg):
    out = _out(args)
    base = pl.load_predictor(args.model)
    if not isinstance(base, pl.DisPredModel):
        raise DataError(f"{args.model}: expected a model directory with model.dae and head.json")
    raw = pl.load_predictor(args.raw)
    val = load_cohort(args.data)
    cfg.ensemble = args.mode
    from .ensemble import fit_gradient, fit_grid

    p_z, p_x = base.p_z(val), pl.predict(raw, val)
    base.weights = fit_grid(p_z, p_x, val.y) if args.mode == "grid" else fit_gradient(p_z, p_x, val.y)
    base.raw = raw
    base.save(out, raw_path=args.raw)


def cmd_predict(args, cfg):
    out = _out(args)
    cohort = load_cohort(args.data)
    scores = pl.predict(pl.load_predictor(args.model), cohort)
    atomic_write_text(os.path.join(out, "scores.tsv"), pl.scores_tsv(cohort.sample_ids, {args.name: scores}))


def cmd_evaluate(args, cfg):
    out = _out(args)
    cohort = load_cohort(args.data)
    ids, cols = pl.read_scores(args.scores)
    cols = pl.align_scores(ids, cols, cohort)
    column = args.column or next(iter(cols))
    if column not in cols:
        raise DataError(f"{args.scores}: no score column {column!r}")
    report = metrics_by_stratum(cols[column], cohort.y, pl.strata_for(cohort, cfg.cutoff), model=column)
    atomic_write_text(os.path.join(out, "metrics.json"), report.to_json())


def cmd_het_sweep(args, cfg):
    out = _out(args)
    cohort = load_cohort(args.data)
    if cohort.proportions is None:
        raise DataError(f"{args.data}: heterogeneity ordering needs a proportions file")
    merged = {}
    for path in args.scores:
        ids, cols = pl.read_scores(path)
        merged.update(pl.align_scores(ids, cols, cohort))
    order, _ = heterogeneity_order(cohort.proportions)
    sweep = het_sweep(merged, cohort.y, order, window=cfg.window, stride=cfg.stride)
    atomic_write_text(os.path.join(out, "het_sweep.tsv"), sweep.to_tsv())


def cmd_pipeline(args, cfg):
    out = _out(args)
    reports = pl.run_pipeline(cfg, out, data_prefix=args.data, prs_weights=args.weights)
    for name, rep in reports.items():
        print(f"{name}\tauc={rep.auc:.4f}")


COMMANDS = {
    "simulate": cmd_simulate,
    "qc": cmd_qc,
    "split": cmd_split,
    "train-dae": cmd_train_dae,
    "embed": cmd_embed,
    "fit-head": cmd_fit_head,
    "fit-baseline": cmd_fit_baseline,
    "fit-ensemble": cmd_fit_ensemble,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "het-sweep": cmd_het_sweep,
    "pipeline": cmd_pipeline,
}


def _fail(code: int, kind: str, exc: BaseException) -> int:
    message = " ".join(str(exc).split())
    print(f"dispred: error code={code} kind={kind} type={type(exc).__name__} message={json.dumps(message)}", file=sys.stderr)
    return code


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
        if args.out:
            pl.echo_config(args.out, cfg, args.command, {"args": _args_record(args)})
        return 0
    except UsageError as exc:
        return _fail(EXIT["usage"], "usage", exc)
    except DispredError as exc:
        return _fail(EXIT[exc.kind], exc.kind, exc)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(EXIT["data"], "data", exc)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT["numeric"], "numeric", exc)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
