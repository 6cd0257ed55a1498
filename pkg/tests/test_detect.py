import json

import numpy as np
import pandas as pd
import pytest

from wavae import detect
from wavae.data import WindowBatch
from wavae.numerics import Rng, ShapeError

pytestmark = pytest.mark.unit


def batch_of(windows: np.ndarray, labels=None) -> WindowBatch:
    labels = np.zeros(len(windows), dtype=int) if labels is None else np.asarray(labels)
    return WindowBatch(windows, labels, np.arange(len(windows)))


class TestScore:
    def test_perfect_reconstruction_scores_zero(self, random_params, mocker):
        windows = Rng(1).normal((5, 3, 2))
        mocker.patch("wavae.detect.reconstruct_mean", side_effect=lambda params, flat: flat.copy())
        assert np.array_equal(detect.score(random_params(), batch_of(windows)), np.zeros(5))

    def test_sum_of_squared_errors(self, random_params, mocker):
        mocker.patch("wavae.detect.reconstruct_mean", side_effect=lambda params, flat: np.ones_like(flat))
        params = random_params(input_dim=8)
        assert np.array_equal(detect.score(params, batch_of(np.zeros((2, 4, 2)))), [8.0, 8.0])

    def test_permutation_equivariant(self, random_params):
        params = random_params(input_dim=6)
        windows = Rng(2).normal((7, 3, 2))
        perm = Rng(3).permutation(7)
        scores = detect.score(params, batch_of(windows))
        assert np.allclose(detect.score(params, batch_of(windows[perm])), scores[perm], rtol=0, atol=1e-12)

    def test_deterministic(self, random_params):
        params = random_params(input_dim=6)
        batch = batch_of(Rng(4).normal((5, 3, 2)))
        assert np.array_equal(detect.score(params, batch), detect.score(params, batch))

    def test_dimension_mismatch(self, random_params):
        with pytest.raises(ShapeError, match="expects 6"):
            detect.score(random_params(input_dim=6), batch_of(np.zeros((2, 4, 2))))

    def test_empty_batch(self, random_params):
        assert detect.score(random_params(input_dim=6), batch_of(np.zeros((0, 3, 2)))).shape == (0,)


class TestThreshold:
    def test_ninety_ninth_percentile(self):
        scores = np.arange(100, dtype=float)
        eta = detect.threshold(scores, 0.99)
        assert eta == pytest.approx(98.01, abs=1e-9)
        assert np.flatnonzero(detect.flag(scores, eta)).tolist() == [99]

    def test_ties_flag_nothing(self):
        scores = np.full(10, 3.3)
        assert not detect.flag(scores, detect.threshold(scores, 0.99)).any()

    def test_median(self):
        scores = [1.0, 2.0, 3.0]
        eta = detect.threshold(scores, 0.5)
        assert eta == 2.0
        assert detect.flag(scores, eta).tolist() == [0, 0, 1]

    def test_empty_scores(self):
        with pytest.raises(ValueError, match="at least one"):
            detect.threshold([], 0.9)

    @pytest.mark.parametrize("q", [0.0, 1.0, -0.1])
    def test_percentile_bounds(self, q):
        with pytest.raises(ValueError, match="Percentile"):
            detect.threshold([1.0, 2.0], q)

    def test_flagged_fraction_bound(self):
        stream = Rng(7)
        for _ in range(50):
            n = int(stream.integers(5, 300))
            q = float(stream.uniform(0.5, 0.99, 1)[0])
            scores = stream.normal(n)
            flagged = detect.flag(scores, detect.threshold(scores, q)).sum()
            assert flagged / n <= 1 - q + 1 / n + 1e-12

    def test_monotone_transform_keeps_flags(self):
        scores = np.abs(Rng(8).normal(200))
        flags = detect.flag(scores, detect.threshold(scores, 0.9))
        for transform in (np.exp, np.sqrt, lambda s: 3.0 * s + 1.0):
            moved = transform(scores)
            assert np.array_equal(detect.flag(moved, detect.threshold(moved, 0.9)), flags)


class TestEvaluate:
    def test_report_fields(self):
        scores = np.arange(20, dtype=float)
        labels = (scores >= 18).astype(int)
        report = detect.evaluate(scores, labels, 0.9, offsets=np.arange(20) + 100)
        assert report.threshold == pytest.approx(17.1)
        assert report.flagged == 2
        assert report.metrics.roc_auc == pytest.approx(1.0)
        assert report.metrics.confusion.tp == 2
        assert report.offsets[0] == 100

    def test_default_offsets(self):
        report = detect.evaluate([0.1, 0.5, 0.9], [0, 0, 1])
        assert report.offsets.tolist() == [0, 1, 2]
        assert report.percentile == detect.DEFAULT_PERCENTILE

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            detect.evaluate([0.1, 0.2], [0, 1, 1])

    def test_writers(self, tmp_path):
        report = detect.evaluate([0.25, 1.0 / 3.0, 0.9], [0, 1, 1], 0.5)
        csv_path = detect.write_scores_csv(report, tmp_path / "reports" / "scores.csv")
        json_path = detect.write_metrics_json(report, tmp_path / "metrics" / "metrics.json")

        frame = pd.read_csv(csv_path, float_precision="round_trip")
        assert list(frame.columns) == ["offset", "score", "label", "flag"]
        assert frame["score"].tolist() == [0.25, 1.0 / 3.0, 0.9]
        assert frame["flag"].tolist() == [0, 0, 1]

        metrics = json.loads(json_path.read_text())
        assert metrics["windows"] == 3 and metrics["flagged"] == 1
        assert {"roc_auc", "pr_auc", "precision", "recall", "f1", "kappa", "tp", "fp", "fn", "tn", "threshold"} <= set(metrics)
        assert json_path.read_text() == json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
