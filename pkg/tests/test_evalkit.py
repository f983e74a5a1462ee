import json
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispred.errors import DimensionError, ParameterError, UndefinedAUCError
from dispred.evalkit import auc, het_sweep, majority_rate, metrics_by_stratum, pca2, probe_accuracy, window_starts
from dispred.nncore import make_rng


def pairwise_auc(scores, labels):
    cases = [s for s, l in zip(scores, labels) if l == 1]
    controls = [s for s, l in zip(scores, labels) if l != 1]
    total = sum(1.0 if c > d else 0.5 if c == d else 0.0 for c, d in product(cases, controls))
    return total / (len(cases) * len(controls))


class TestAuc:
    def test_hand_example(self):
        assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_perfect_and_ties(self):
        assert auc([1, 2, 3, 4], [0, 0, 1, 1]) == 1.0
        assert auc([5, 5, 5, 5], [0, 1, 0, 1]) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedAUCError):
            auc([1, 2], [1, 1])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            auc([1, 2, 3], [0, 1])

    def test_pairwise_oracle_1000_instances(self):
        rng = make_rng(0, "auc-oracle")
        for _ in range(1000):
            n = int(rng.integers(2, 21))
            scores = rng.integers(0, 5, size=n).astype(float)  # frequent ties
            labels = rng.integers(0, 2, size=n)
            labels[0], labels[1] = 0, 1
            assert auc(scores, labels) == pairwise_auc(scores, labels)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6))
    def test_negation_complement(self, seed):
        rng = make_rng(seed, "neg")
        scores = rng.normal(size=15)
        labels = np.r_[0, 1, rng.integers(0, 2, size=13)]
        assert auc(scores, labels) + auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)


class TestStrata:
    def test_defined_and_undefined(self):
        scores = np.array([0.1, 0.9, 0.2, 0.8, 0.3, 0.4])
        labels = np.array([0, 1, 0, 1, 0, 0])
        strata = np.array(["EUR", "EUR", "AFR", "AFR", "MIX", "MIX"])
        rep = metrics_by_stratum(scores, labels, strata, model="m")
        assert rep.stratum("EUR").auc == 1.0
        mix = rep.stratum("MIX")
        assert mix.auc is None and mix.n_case == 0 and mix.n_control == 2
        d = json.loads(rep.to_json())
        assert d["model"] == "m"
        assert d["global"] == {"n": 6, "n_case": 2, "auc": auc(scores, labels)}
        assert set(d["strata"][0]) == {"name", "n", "n_case", "n_control", "auc"}
        assert [s["name"] for s in d["strata"]] == ["AFR", "EUR", "MIX"]

    def test_single_stratum_equals_global(self):
        rng = make_rng(1, "s")
        scores, labels = rng.normal(size=30), np.arange(30) % 2
        rep = metrics_by_stratum(scores, labels, ["ALL"] * 30)
        assert rep.strata[0].auc == rep.auc

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            metrics_by_stratum([1, 2], [0, 1], ["a"])


class TestHetSweep:
    def test_window_count_closed_form(self):
        assert window_starts(800, 750, 50) == [0, 50]
        for n, w, s in [(3000, 750, 50), (751, 750, 1), (1000, 100, 7)]:
            assert len(window_starts(n, w, s)) == (n - w) // s + 1

    def test_single_window_is_global(self):
        rng = make_rng(2, "h")
        scores, labels = rng.normal(size=750), np.arange(750) % 3 == 0
        sweep = het_sweep({"m": scores}, labels, np.arange(750), window=750, stride=13)
        assert sweep.auc["m"] == [auc(scores, labels)]

    def test_constant_scores(self):
        labels = np.arange(100) % 2
        sweep = het_sweep({"c": np.zeros(100)}, labels, np.arange(100)[::-1], window=20, stride=10)
        assert all(v == 0.5 for v in sweep.auc["c"])

    def test_missing_class_window(self):
        labels = np.r_[np.zeros(10), np.ones(10)]
        sweep = het_sweep({"m": np.arange(20.0)}, labels, np.arange(20), window=10, stride=5)
        assert sweep.auc["m"] == [None, 1.0, None]
        assert "NA" in sweep.to_tsv()

    def test_window_too_large(self):
        with pytest.raises(ParameterError):
            het_sweep({"m": np.zeros(5)}, np.arange(5) % 2, np.arange(5), window=6)

    def test_order_must_be_permutation(self):
        with pytest.raises(ParameterError):
            het_sweep({"m": np.zeros(5)}, np.arange(5) % 2, [0, 0, 1, 2, 3], window=2)


class TestPca:
    def test_line(self):
        t = np.linspace(-1, 1, 20)[:, None]
        out = pca2(np.hstack([t, 2 * t, -t]))
        assert out[:, 1].var() < 1e-10

    def test_identical_points(self):
        np.testing.assert_array_equal(pca2(np.ones((5, 3))), 0.0)

    def test_variance_order_and_sign_convention(self):
        Z = make_rng(3, "p").normal(size=(40, 5)) * [5, 3, 1, 1, 1]
        out = pca2(Z)
        assert out[:, 0].var() >= out[:, 1].var()
        # loadings keep their sign under negation of the data, so scores flip
        np.testing.assert_allclose(pca2(-Z), -out, atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_row_permutation_equivariant(self, seed):
        rng = make_rng(seed, "perm")
        Z = rng.normal(size=(12, 4)) * [4, 2, 1, 0.5]
        perm = rng.permutation(12)
        out = pca2(Z)
        back = np.empty_like(out)
        back[perm] = pca2(Z[perm])
        np.testing.assert_allclose(np.abs(back), np.abs(out), atol=1e-9)

    def test_needs_two_rows(self):
        with pytest.raises(ParameterError):
            pca2(np.ones((1, 3)))


def test_probe_separable_and_chance():
    rng = make_rng(4, "probe")
    labels = np.repeat(["A", "B", "C"], 40)
    centres = {"A": [3, 0], "B": [0, 3], "C": [-3, -3]}
    X = np.array([centres[l] for l in labels]) + rng.normal(size=(120, 2)) * 0.3
    assert probe_accuracy(X, labels) > 0.95
    assert majority_rate(labels) == pytest.approx(1 / 3)
