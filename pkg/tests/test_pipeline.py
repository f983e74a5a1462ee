import json

import numpy as np
import pytest

from dispred import disentangler as dae
from dispred import pipeline as pl
from dispred.cohort import GenotypeMatrix, LabeledCohort, load_cohort
from dispred.errors import ConfigError, DataError
from dispred.evalkit import window_starts
from dispred.predictors.linear import LinearModel


class TestRunConfig:
    def test_round_trip(self, small_config):
        again = pl.RunConfig.from_dict(json.loads(json.dumps(small_config.to_dict())))
        assert again.to_dict() == small_config.to_dict()

    @pytest.mark.parametrize(
        "patch",
        [{"colour": 1}, {"sim": {"colour": 1}}, {"train": {"colour": 1}}, {"qc": {"colour": 1}}, {"nn": {"colour": 1}}, {"adv": {"colour": 1}}],
    )
    def test_unknown_keys_rejected(self, patch):
        with pytest.raises(ConfigError, match="colour"):
            pl.RunConfig.from_dict(patch)

    @pytest.mark.parametrize("patch", [{"ensemble": "best"}, {"baselines": ["ridge"]}, {"cutoff": 0.3}, {"split": [0.5, 0.5]}])
    def test_invalid_values(self, patch):
        with pytest.raises(ConfigError):
            pl.RunConfig.from_dict(patch)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            pl.RunConfig.from_file(p)

    def test_seed_propagates(self):
        cfg = pl.RunConfig().with_seed(7)
        assert cfg.sim.seed == cfg.train.seed == 7


class TestScores:
    def test_tsv_round_trip(self, tmp_path):
        p = tmp_path / "s.tsv"
        p.write_text(pl.scores_tsv(["a", "b"], {"m1": np.array([0.25, -1.0]), "m2": np.array([1e-300, 3.0])}))
        ids, cols = pl.read_scores(p)
        assert ids == ["a", "b"]
        np.testing.assert_array_equal(cols["m2"], [1e-300, 3.0])

    def test_align_reorders_and_rejects_missing(self):
        G = GenotypeMatrix(["a", "b"], ["v"], np.zeros((2, 1)))
        c = LabeledCohort(G, [0, 1])
        out = pl.align_scores(["b", "a"], {"m": np.array([2.0, 1.0])}, c)
        np.testing.assert_array_equal(out["m"], [1.0, 2.0])
        with pytest.raises(DataError):
            pl.align_scores(["a"], {"m": np.array([1.0])}, c)


def test_z_d_head_alone_is_not_a_predictor():
    G = GenotypeMatrix(["a"], ["v"], np.zeros((1, 1)))
    head = LinearModel(np.zeros(2), 0.0, role="z_d")
    with pytest.raises(DataError):
        pl.predict(head, LabeledCohort(G, [0]))


def test_autoencoder_file_is_not_a_predictor(tmp_path):
    model = dae.build(5, 2, 2, np.random.default_rng(0))
    dae.save(model, tmp_path / "m.dae")
    with pytest.raises(DataError, match="head"):
        pl.load_predictor(tmp_path / "m.dae")


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    from conftest import SMALL

    cfg = pl.RunConfig.from_dict({**SMALL, "baselines": ["lasso", "prs", "nn", "adv"]}).with_seed(3)
    out = tmp_path_factory.mktemp("run")
    reports = pl.run_pipeline(cfg, out)
    return cfg, out, reports


class TestRun:
    def test_artifacts(self, run):
        _, out, reports = run
        for name in ("config.json", "qc_report.tsv", "scores.tsv", "embeddings.tsv", "metrics.json", "het_sweep.tsv", "history.tsv"):
            assert (out / name).is_file(), name
        assert set(reports) == {"dispred", "z_d_head", "lasso", "prs", "nn", "adv"}
        assert sorted(p.name for p in (out / "dispred").iterdir()) == ["ensemble.json", "head.json", "model.dae", "raw.json"]

    def test_saved_model_reproduces_scores(self, run):
        cfg, out, _ = run
        cohort, _ = pl.preprocess(load_cohort(out / "data" / "cohort"), cfg.qc)
        test = pl.split_cohort(cohort, cfg.split, cfg.seed)[2]
        ids, cols = pl.read_scores(out / "scores.tsv")
        assert ids == test.sample_ids
        for name, path in [("dispred", out / "dispred"), ("lasso", out / "baselines" / "lasso.json"), ("nn", out / "baselines" / "nn.npz")]:
            np.testing.assert_array_equal(pl.predict(pl.load_predictor(path), test), cols[name])

    def test_embeddings_header(self, run):
        cfg, out, _ = run
        header = (out / "embeddings.tsv").read_text().splitlines()[0].split("\t")
        d, a = cfg.train.z_d_dim, cfg.train.z_a_dim
        assert header[0] == "sample_id" and header[-1] == "ancestry_label"
        assert header[1 : 1 + a] == [f"z_a_{i + 1}" for i in range(a)]
        assert header[-5:-1] == ["pca_a_1", "pca_a_2", "pca_d_1", "pca_d_2"]
        assert len(header) == 1 + a + d + 5

    def test_het_sweep_rows(self, run):
        cfg, out, _ = run
        n_test = len(pl.read_scores(out / "scores.tsv")[0])
        rows = (out / "het_sweep.tsv").read_text().splitlines()
        assert len(rows) - 1 == len(window_starts(n_test, cfg.window, cfg.stride))

    def test_metrics_json_shape(self, run):
        _, out, _ = run
        m = json.loads((out / "metrics.json").read_text())
        assert m["model"] == "dispred"
        assert 0.0 <= m["global"]["auc"] <= 1.0
        assert {s["name"] for s in m["strata"]} <= {"EUR", "AFR", "AMR", "MIX"}

    def test_loaded_data_matches_simulated(self, run, tmp_path):
        cfg, out, _ = run
        again = tmp_path / "again"
        pl.run_pipeline(cfg, again, data_prefix=out / "data" / "cohort", prs_weights=out / "data" / "prs_weights.tsv")
        assert (again / "metrics.json").read_bytes() == (out / "metrics.json").read_bytes()
