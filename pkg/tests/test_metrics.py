import logging
import math

import numpy as np
import pytest
from sklearn import metrics as skm

from wavae.metrics import (
    MetricBlock,
    UndefinedMetricError,
    classification_block,
    confusion_matrix,
    metric_block,
    pr_auc,
    roc_auc,
    roc_curve,
)
from wavae.numerics import Rng

pytestmark = pytest.mark.unit


def mann_whitney(scores, labels) -> float:
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def exhaustive_pr(scores, labels) -> float:
    positives = int(labels.sum())
    terms, previous = [], 0.0
    for t in sorted(set(scores.tolist()), reverse=True):
        flagged = scores >= t
        tp = int(np.sum(flagged & (labels == 1)))
        fp = int(np.sum(flagged & (labels == 0)))
        recall = tp / positives
        terms.append((recall - previous) * (tp / (tp + fp)))
        previous = recall
    return math.fsum(terms)


def random_instance(stream: Rng, n: int, ties: bool = True):
    scores = stream.normal(n)
    if ties:
        scores = np.round(scores, 1)
    labels = (stream.uniform(0.0, 1.0, n) < 0.3).astype(int)
    labels[0], labels[1] = 1, 0
    return scores, labels


class TestRocAuc:
    def test_perfect_ranking(self):
        assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_three_of_four_pairs(self):
        assert roc_auc([0.2, 0.9, 0.4, 0.6], [0, 1, 1, 0]) == pytest.approx(0.75)

    def test_inverted_labels(self):
        scores, labels = random_instance(Rng(1), 60)
        assert roc_auc(scores, 1 - labels) == pytest.approx(1.0 - roc_auc(scores, labels), abs=1e-12)

    def test_all_tied_scores_give_half(self):
        assert roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == pytest.approx(0.5)

    def test_matches_mann_whitney(self):
        stream = Rng(2024)
        for _ in range(100):
            n = int(stream.integers(2, 201))
            scores, labels = random_instance(stream, n)
            assert abs(roc_auc(scores, labels) - mann_whitney(scores, labels)) <= 1e-9

    def test_invariant_to_increasing_transforms(self):
        scores, labels = random_instance(Rng(3), 150)
        base = roc_auc(scores, labels)
        assert roc_auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
        assert roc_auc(5.0 * scores - 2.0, labels) == pytest.approx(base, abs=1e-12)

    @pytest.mark.parametrize("labels", [[0, 0, 0], [1, 1, 1]])
    def test_single_class_is_undefined(self, labels):
        with pytest.raises(UndefinedMetricError, match="undefined AUC"):
            roc_auc([0.1, 0.2, 0.3], labels)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="2 scores for 3 labels"):
            roc_auc([0.1, 0.2], [0, 1, 1])

    def test_labels_must_be_binary(self):
        with pytest.raises(ValueError, match="0 or 1"):
            roc_auc([0.1, 0.2], [0, 2])

    def test_curve_endpoints(self):
        fpr, tpr, thresholds = roc_curve([0.3, 0.1, 0.7, 0.7], [1, 0, 0, 1])
        assert (fpr[0], tpr[0], thresholds[0]) == (0.0, 0.0, np.inf)
        assert (fpr[-1], tpr[-1]) == (1.0, 1.0)
        assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)

    def test_threshold_flags_lie_on_the_curve(self):
        scores, labels = random_instance(Rng(4), 80)
        fpr, tpr, _ = roc_curve(scores, labels)
        fpr, tpr = np.asarray(fpr), np.asarray(tpr)
        for eta in np.r_[np.unique(scores), scores.min() - 1.0]:
            c = confusion_matrix((scores > eta).astype(int), labels)
            x, y = c.fp / (c.fp + c.tn), c.tp / (c.tp + c.fn)
            assert np.any((np.abs(fpr - x) < 1e-12) & (np.abs(tpr - y) < 1e-12))


class TestPrAuc:
    def test_perfect_ranking(self):
        assert pr_auc([0.9, 0.8, 0.1, 0.05], [1, 1, 0, 0]) == pytest.approx(1.0)

    def test_matches_exhaustive_thresholds(self):
        stream = Rng(99)
        for _ in range(100):
            n = int(stream.integers(2, 51))
            scores, labels = random_instance(stream, n)
            assert pr_auc(scores, labels) == pytest.approx(exhaustive_pr(scores, labels), abs=1e-12)

    def test_random_ranking_approaches_positive_rate(self):
        for seed in range(5):
            stream = Rng(seed).spawn("pr-baseline")
            labels = (stream.uniform(0.0, 1.0, 10_000) < 0.1).astype(int)
            rate = labels.mean()
            assert abs(pr_auc(stream.normal(10_000), labels) - rate) <= 0.05

    def test_invariant_to_increasing_transforms(self):
        scores, labels = random_instance(Rng(5), 120)
        assert pr_auc(np.exp(scores), labels) == pytest.approx(pr_auc(scores, labels), abs=1e-12)

    def test_no_positives_is_undefined(self):
        with pytest.raises(UndefinedMetricError, match="no positives"):
            pr_auc([0.1, 0.2], [0, 0])

    def test_all_positives(self):
        assert pr_auc([0.1, 0.2], [1, 1]) == pytest.approx(1.0)


class TestClassificationBlock:
    def test_perfect_flags(self):
        precision, recall, f1, kappa, confusion = classification_block([1, 0, 1, 0], [1, 0, 1, 0])
        assert (precision, recall, f1, kappa) == (1.0, 1.0, 1.0, 1.0)
        assert confusion.as_matrix() == [[2, 0], [0, 2]]

    def test_no_flags_with_positives(self):
        precision, recall, f1, _, _ = classification_block([0, 0, 0], [1, 0, 1])
        assert (precision, recall, f1) == (0.0, 0.0, 0.0)

    def test_balanced_example(self):
        precision, recall, f1, kappa, confusion = classification_block([1, 1, 0, 0], [1, 0, 1, 0])
        assert (confusion.tp, confusion.fp, confusion.fn, confusion.tn) == (1, 1, 1, 1)
        assert (precision, recall, f1) == (0.5, 0.5, 0.5)
        assert kappa == pytest.approx(0.0)

    def test_chance_agreement_of_one(self):
        *_, kappa, confusion = classification_block([0, 0, 0], [0, 0, 0])
        assert kappa == 0.0
        assert confusion.total == 3

    def test_kappa_range_and_counts(self):
        stream = Rng(6)
        for _ in range(50):
            n = int(stream.integers(1, 60))
            flags = (stream.uniform(0, 1, n) < 0.4).astype(int)
            labels = (stream.uniform(0, 1, n) < 0.4).astype(int)
            precision, recall, f1, kappa, confusion = classification_block(flags, labels)
            assert confusion.total == n
            assert -1.0 <= kappa <= 1.0
            assert all(0.0 <= v <= 1.0 for v in (precision, recall, f1))


class TestMetricBlock:
    def test_full_block(self):
        block = metric_block([0.2, 0.9, 0.4, 0.6], [0, 1, 0, 0], [0, 1, 1, 0])
        assert isinstance(block, MetricBlock)
        assert block.roc_auc == pytest.approx(0.75)
        assert (block.precision, block.recall) == (1.0, 0.5)
        flat = block.to_dict()
        assert set(flat) == {"roc_auc", "pr_auc", "precision", "recall", "f1", "kappa", "tp", "fp", "fn", "tn"}
        assert flat["tp"] + flat["fp"] + flat["fn"] + flat["tn"] == 4

    def test_single_class_leaves_ranking_metrics_empty(self, caplog):
        with caplog.at_level(logging.WARNING, logger="wavae.metrics"):
            block = metric_block([0.1, 0.4, 0.3], [0, 1, 0], [0, 0, 0])
        assert block.roc_auc is None and block.pr_auc is None
        assert block.precision == 0.0
        assert "ROC-AUC skipped" in caplog.text and "PR-AUC skipped" in caplog.text

    def test_all_anomalous_keeps_pr(self, caplog):
        with caplog.at_level(logging.WARNING, logger="wavae.metrics"):
            block = metric_block([0.1, 0.4], [0, 1], [1, 1])
        assert block.roc_auc is None
        assert block.pr_auc == pytest.approx(1.0)

    def test_delegates_to_sklearn(self, mocker):
        roc = mocker.spy(skm, "roc_auc_score")
        ap = mocker.spy(skm, "average_precision_score")
        kappa = mocker.spy(skm, "cohen_kappa_score")
        metric_block([0.2, 0.9, 0.4, 0.6], [0, 1, 0, 0], [0, 1, 1, 0])
        assert (roc.call_count, ap.call_count, kappa.call_count) == (1, 1, 1)
