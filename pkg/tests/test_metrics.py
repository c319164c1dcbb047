import json

import numpy as np
import pytest

from desia import AttackResult, ParameterError, auc, roc, summarize, tpr_at_fpr
from desia.harness import GameRun

from helpers import pairwise_auc


class TestRoc:
    def test_perfect_separation(self):
        curve = roc([0.9, 0.1], [1, 0])
        assert (0.0, 1.0) in set(zip(curve.fpr, curve.tpr))
        assert auc(curve) == 1.0

    def test_all_scores_equal_is_diagonal(self):
        curve = roc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])
        assert list(curve.fpr) == [0.0, 1.0]
        assert list(curve.tpr) == [0.0, 1.0]
        assert auc(curve) == 0.5

    def test_three_point_example_from_pairwise_oracle(self):
        # scores [.8,.6,.4], labels [1,0,1]: pairs (.8 vs .6) win, (.4 vs .6)
        # lose -> oracle AUC (1 + 0)/2 = 0.5; curve visits (0,.5) then (1,.5)
        scores, labels = [0.8, 0.6, 0.4], [1, 0, 1]
        expected = pairwise_auc(scores, labels)
        assert expected == 0.5
        curve = roc(scores, labels)
        pts = list(zip(curve.fpr, curve.tpr))
        assert pts == [(0.0, 0.0), (0.0, 0.5), (1.0, 0.5), (1.0, 1.0)]
        assert auc(curve) == pytest.approx(expected, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(ParameterError):
            roc([0.2, 0.4], [1, 1])

    def test_ties_grouped(self):
        curve = roc([0.7, 0.7, 0.2], [1, 0, 0])
        # both 0.7 scores move together: (0,0) -> (0.5, 1.0) -> (1, 1)
        assert list(zip(curve.fpr, curve.tpr)) == [(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)]


class TestAuc:
    def test_matches_pairwise_oracle_randomized(self, rng):
        for _ in range(500):
            n = int(rng.integers(4, 200))
            scores = np.round(rng.random(n), int(rng.integers(1, 4)))
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            got = auc(roc(scores, labels))
            assert abs(got - pairwise_auc(scores, labels)) < 1e-12

    def test_affine_monotone_invariance(self, rng):
        scores = rng.random(60)
        labels = rng.integers(0, 2, size=60)
        labels[:2] = [0, 1]
        base = auc(roc(scores, labels))
        assert auc(roc(3.5 * scores + 2.0, labels)) == pytest.approx(base, abs=1e-12)


class TestTprAtFpr:
    def test_perfect_separation_low_k(self):
        curve = roc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert tpr_at_fpr(curve, 1e-3) == 1.0

    def test_diagonal_conservative(self):
        curve = roc([0.5] * 10, [1, 0] * 5)
        assert tpr_at_fpr(curve, 0.1) == 0.0  # only (0,0) achieves fpr <= 0.1

    def test_three_point_example(self):
        curve = roc([0.8, 0.6, 0.4], [1, 0, 1])
        assert tpr_at_fpr(curve, 0.5) == 0.5

    def test_monotone_in_k(self, rng):
        scores = rng.random(80)
        labels = rng.integers(0, 2, size=80)
        labels[:2] = [0, 1]
        curve = roc(scores, labels)
        ks = np.linspace(0.01, 0.99, 25)
        vals = [tpr_at_fpr(curve, k) for k in ks]
        assert (np.diff(vals) >= 0).all()

    def test_k_out_of_range(self):
        curve = roc([0.9, 0.1], [1, 0])
        for k in (0.0, 1.0, -0.5):
            with pytest.raises(ParameterError):
                tpr_at_fpr(curve, k)


def _run(scores, labels, deterministic=None):
    det = deterministic or [False] * len(scores)
    results = tuple(
        AttackResult(
            target_id=str(i), method="desia", prediction=int(s > 0.5),
            score=float(s), deterministic=bool(d), truth=int(t),
        )
        for i, (s, t, d) in enumerate(zip(scores, labels, det))
    )
    return GameRun(results=results, metadata={"game": "aia"})


class TestSummarize:
    def test_empty_run_warns(self):
        with pytest.warns(RuntimeWarning):
            report = summarize(GameRun(results=(), metadata={}))
        assert report["n_targets"] == 0 and report["auc"] is None

    def test_deterministic_coverage(self):
        run = _run([1.0, 0.5, 0.0], [1, 0, 0], deterministic=[True, False, True])
        report = summarize(run)
        assert report["deterministic_coverage"] == pytest.approx(2 / 3)

    def test_report_contains_oracle_auc(self, tmp_path):
        run = _run([0.8, 0.6, 0.4], [1, 0, 1])
        report = summarize(run, ks=(0.5,), out_dir=tmp_path)
        assert report["auc"] == pytest.approx(0.5)
        on_disk = json.loads((tmp_path / "report.json").read_text())
        assert on_disk["auc"] == report["auc"]
        roc_lines = (tmp_path / "roc.csv").read_text().strip().splitlines()
        assert roc_lines[0] == "fpr,tpr,threshold"
        assert len(roc_lines) == 5

    def test_per_method_breakdown(self):
        results = (
            AttackResult("a", "desia", 1, 1.0, True, truth=1),
            AttackResult("b", "random", 0, 0.5, False, truth=1),
        )
        report = summarize(GameRun(results=results, metadata={}))
        assert report["methods"]["desia"]["accuracy"] == 1.0
        assert report["methods"]["random"]["accuracy"] == 0.0
