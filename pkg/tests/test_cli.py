import json
import subprocess
import sys

import pytest

from dispred.cli import run


def cli(*argv):
    return run([str(a) for a in argv])


def test_no_subcommand(capsys):
    assert cli() == 1
    assert capsys.readouterr().err.startswith("dispred: error code=1 kind=usage")


def test_unknown_flag(capsys):
    assert cli("simulate", "--frobnicate") == 1
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and "kind=usage" in err


def test_missing_out_is_usage(capsys):
    assert cli("simulate") == 1


def test_missing_file_is_data_error(tmp_path, capsys):
    assert cli("predict", "--model", tmp_path / "none.json", "--data", tmp_path / "x", "--out", tmp_path / "o") == 2
    assert "kind=data" in capsys.readouterr().err


def test_bad_config_is_data_error(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{"sim": {"n_samples": 10, "colour": 1}}')
    assert cli("simulate", "--config", p, "--out", tmp_path / "o") == 2
    assert "type=ConfigError" in capsys.readouterr().err


def test_undefined_auc_is_data_error(tmp_path, small_config_file, capsys):
    out = tmp_path / "sim"
    assert cli("simulate", "--config", small_config_file, "--out", out) == 0
    scores = tmp_path / "s.tsv"
    ids = [line.split("\t")[0] for line in (out / "cohort.labels.tsv").read_text().splitlines()[1:]]
    scores.write_text("sample_id\tm\n" + "".join(f"{i}\t0.5\n" for i in ids))
    # every sample a case: AUC is undefined
    labels = (out / "cohort.labels.tsv").read_text().splitlines()
    head = labels[0].split("\t")
    col = head.index("phenotype")
    rows = [r.split("\t") for r in labels[1:]]
    for r in rows:
        r[col] = "1"
    (out / "cohort.labels.tsv").write_text("\n".join(["\t".join(head)] + ["\t".join(r) for r in rows]) + "\n")
    assert cli("evaluate", "--scores", scores, "--data", out / "cohort", "--out", tmp_path / "e") == 2
    assert "UndefinedAUCError" in capsys.readouterr().err


def test_stepwise_matches_files(tmp_path, small_config_file):
    c = ("--config", small_config_file, "--seed", 2)
    d = tmp_path
    assert cli("simulate", *c, "--out", d / "sim") == 0
    assert cli("qc", *c, "--data", d / "sim/cohort", "--out", d / "qc") == 0
    assert cli("split", *c, "--data", d / "qc/cohort", "--out", d / "split") == 0
    assert cli("train-dae", *c, "--data", d / "split/train", "--val", d / "split/val", "--out", d / "dae") == 0
    assert cli("fit-head", *c, "--model", d / "dae/model.dae", "--data", d / "split/train", "--out", d / "head") == 0
    assert cli("fit-baseline", "lasso", *c, "--data", d / "split/train", "--out", d / "lasso") == 0
    assert cli("fit-baseline", "prs", *c, "--data", d / "split/train", "--weights", d / "sim/prs_weights.tsv", "--out", d / "prs") == 0
    for mode in ("grid", "grad"):
        assert cli("fit-ensemble", mode, *c, "--model", d / "head", "--raw", d / "lasso/lasso.json", "--data", d / "split/val", "--out", d / mode) == 0
    grid = json.loads((d / "grid/ensemble.json").read_text())
    assert grid["mode"] == "grid" and 0.1 <= grid["alpha"] <= 1.5
    assert cli("predict", *c, "--model", d / "grad", "--data", d / "split/test", "--name", "dispred", "--out", d / "p1") == 0
    assert cli("predict", *c, "--model", d / "prs/prs_weights.tsv", "--data", d / "split/test", "--name", "prs", "--out", d / "p2") == 0
    assert cli("evaluate", *c, "--scores", d / "p1/scores.tsv", "--data", d / "split/test", "--out", d / "ev") == 0
    assert json.loads((d / "ev/metrics.json").read_text())["model"] == "dispred"
    sweep = ("het-sweep", *c, "--scores", d / "p1/scores.tsv", d / "p2/scores.tsv", "--data", d / "split/test")
    assert cli(*sweep, "--window", 30, "--stride", 10, "--out", d / "het") == 0
    assert (d / "het/het_sweep.tsv").read_text().startswith("window_start\twindow_end\tdispred\tprs\n")
    assert cli("embed", *c, "--model", d / "dae", "--data", d / "split/test", "--out", d / "emb") == 0
    for sub in ("sim", "qc", "split", "dae", "head", "lasso", "grid", "p1", "ev", "het", "emb"):
        echoed = json.loads((d / sub / "config.json").read_text())
        assert echoed["config"]["seed"] == 2
    assert not list(d.rglob("*.tmp"))


def test_window_larger_than_cohort(tmp_path, small_config_file, capsys):
    c = ("--config", small_config_file)
    assert cli("simulate", *c, "--out", tmp_path / "sim") == 0
    scores = tmp_path / "s.tsv"
    ids = [line.split("\t")[0] for line in (tmp_path / "sim/cohort.labels.tsv").read_text().splitlines()[1:]]
    scores.write_text("sample_id\tm\n" + "".join(f"{s}\t{i}\n" for i, s in enumerate(ids)))
    assert cli("het-sweep", *c, "--scores", scores, "--data", tmp_path / "sim/cohort", "--window", 10**6, "--out", tmp_path / "h") != 0


def test_console_entry_point(tmp_path, small_config_file):
    proc = subprocess.run(
        [sys.executable, "-m", "dispred.cli", "pipeline", "--config", str(small_config_file), "--seed", "4", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.splitlines()[0].startswith("dispred\tauc=")
    assert json.loads((tmp_path / "config.json").read_text())["command"] == "pipeline"
