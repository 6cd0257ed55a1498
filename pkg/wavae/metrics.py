"""
Ranking and classification metrics over per-window scores.

Computation is delegated to ``sklearn.metrics``. This module adds the label
checks, turns single-class inputs into ``UndefinedMetricError`` instead of
sklearn warnings, and packs everything into one ``MetricBlock``. ROC ties get
half credit (the Mann-Whitney statistic); PR-AUC is average precision, a
step-wise sum rather than a trapezoid.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from sklearn import metrics as skm

logger = logging.getLogger(__name__)

BINARY_LABELS = [0, 1]


class UndefinedMetricError(ValueError):
    """A ranking metric was requested on labels it cannot be computed for."""


@dataclass
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_matrix(self) -> List[List[int]]:
        """[[TN, FP], [FN, TP]], rows are labels, columns are flags."""
        return [[self.tn, self.fp], [self.fn, self.tp]]


@dataclass
class MetricBlock:
    """Full metric set for one evaluation. Ranking metrics are None on single-class data."""

    roc_auc: Optional[float]
    pr_auc: Optional[float]
    precision: float
    recall: float
    f1: float
    kappa: float
    confusion: ConfusionMatrix

    def to_dict(self) -> Dict[str, object]:
        flat = asdict(self)
        confusion = flat.pop("confusion")
        for key, value in confusion.items():
            flat[key] = value
        return flat


def _validate(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores for {labels.size} labels")
    if labels.size and not np.isin(labels, BINARY_LABELS).all():
        raise ValueError("Labels must be 0 or 1")
    return scores, labels


def _require_both_classes(labels: np.ndarray) -> None:
    positives = int(labels.sum())
    negatives = labels.size - positives
    if positives == 0 or negatives == 0:
        raise UndefinedMetricError(f"undefined AUC: single-class labels ({positives} positives, {negatives} negatives)")


def roc_curve(scores, labels) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) with one point per distinct score, starting at (0, 0) with threshold +inf."""
    scores, labels = _validate(scores, labels)
    _require_both_classes(labels)
    return skm.roc_curve(labels, scores, drop_intermediate=False)


def roc_auc(scores, labels) -> float:
    scores, labels = _validate(scores, labels)
    _require_both_classes(labels)
    return float(skm.roc_auc_score(labels, scores))


def pr_auc(scores, labels) -> float:
    """Sum over distinct thresholds of (R_k - R_{k-1}) * P_k, scanning scores high to low."""
    scores, labels = _validate(scores, labels)
    if int(labels.sum()) == 0:
        raise UndefinedMetricError("undefined PR-AUC: labels contain no positives")
    return float(skm.average_precision_score(labels, scores))


def confusion_matrix(flags, labels) -> ConfusionMatrix:
    flags, labels = _validate(flags, labels)
    if labels.size == 0:
        return ConfusionMatrix(0, 0, 0, 0)
    tn, fp, fn, tp = skm.confusion_matrix(labels, flags.astype(np.int64), labels=BINARY_LABELS).ravel()
    return ConfusionMatrix(tp=int(tp), fp=int(fp), fn=int(fn), tn=int(tn))


def classification_block(flags, labels) -> Tuple[float, float, float, float, ConfusionMatrix]:
    """
    (precision, recall, f1, kappa, confusion) for binary flags.

    Undefined precision, recall and F1 are 0; kappa is 0 when chance
    agreement is already 1.
    """
    confusion = confusion_matrix(flags, labels)
    if confusion.total == 0:
        return 0.0, 0.0, 0.0, 0.0, confusion
    flags, labels = _validate(flags, labels)
    flags = flags.astype(np.int64)
    precision, recall, f1, _ = skm.precision_recall_fscore_support(
        labels, flags, labels=BINARY_LABELS, pos_label=1, average="binary", zero_division=0
    )
    # flags and labels constant and equal: chance agreement is 1 and sklearn returns nan
    if np.unique(np.r_[flags, labels]).size == 1:
        kappa = 0.0
    else:
        kappa = float(skm.cohen_kappa_score(labels, flags, labels=BINARY_LABELS))
    return float(precision), float(recall), float(f1), kappa, confusion


def metric_block(scores, flags, labels) -> MetricBlock:
    """Every metric at once; undefined ranking metrics are logged and left as None."""
    try:
        roc = roc_auc(scores, labels)
    except UndefinedMetricError as exc:
        logger.warning(f"ROC-AUC skipped: {exc}")
        roc = None
    try:
        pr = pr_auc(scores, labels)
    except UndefinedMetricError as exc:
        logger.warning(f"PR-AUC skipped: {exc}")
        pr = None
    precision, recall, f1, kappa, confusion = classification_block(flags, labels)
    return MetricBlock(roc, pr, precision, recall, f1, kappa, confusion)
