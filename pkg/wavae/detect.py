"""Reconstruction-error scoring, percentile thresholding and report files."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from .data import WindowBatch
from .metrics import MetricBlock, metric_block
from .numerics import ShapeError
from .vae import ModelParams, reconstruct_mean

logger = logging.getLogger(__name__)

DEFAULT_PERCENTILE = 0.99


@dataclass
class AnomalyReport:
    """Scores, threshold, flags and metrics for one evaluation pass."""

    scores: np.ndarray
    threshold: float
    flags: np.ndarray
    labels: np.ndarray
    offsets: np.ndarray
    percentile: float
    metrics: MetricBlock

    def __post_init__(self):
        if not len(self.scores) == len(self.labels) == len(self.flags) == len(self.offsets):
            raise ValueError("scores, flags, labels and offsets must have equal length")

    @property
    def flagged(self) -> int:
        return int(self.flags.sum())

    def to_dict(self) -> Dict[str, object]:
        """Flat metric object written to metrics.json."""
        summary = self.metrics.to_dict()
        summary.update(
            threshold=float(self.threshold),
            percentile=float(self.percentile),
            windows=int(len(self.scores)),
            flagged=self.flagged,
        )
        return summary


def score(params: ModelParams, batch: WindowBatch) -> np.ndarray:
    """
    Sum of squared reconstruction errors per window.

    ``batch`` must already be in the raw-stream representation the model was
    trained on. The posterior mean is decoded, so scoring draws no noise.
    """
    flat = batch.flat
    if flat.shape[1] != params.input_dim:
        raise ShapeError(
            f"score: windows flatten to {flat.shape[1]} values but the model expects {params.input_dim} "
            f"(window shape {batch.windows.shape[1:]})"
        )
    if flat.shape[0] == 0:
        return np.zeros(0)
    residual = flat - reconstruct_mean(params, flat)
    return np.sum(residual * residual, axis=1)


def threshold(scores, q: float = DEFAULT_PERCENTILE) -> float:
    """q-quantile with linear interpolation between order statistics."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("threshold needs at least one score")
    if not 0 < q < 1:
        raise ValueError(f"Percentile must be in (0, 1), got {q}")
    return float(np.quantile(scores, q, method="linear"))


def flag(scores, eta: float) -> np.ndarray:
    return (np.asarray(scores) > eta).astype(np.int64)


def evaluate(
    scores,
    labels,
    q: float = DEFAULT_PERCENTILE,
    offsets: Optional[np.ndarray] = None,
) -> AnomalyReport:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    eta = threshold(scores, q)
    flags = flag(scores, eta)
    offsets = np.arange(len(scores)) if offsets is None else np.asarray(offsets, dtype=np.int64)
    report = AnomalyReport(scores, eta, flags, labels, offsets, q, metric_block(scores, flags, labels))
    logger.info(
        f"Evaluated {len(scores)} windows: threshold={eta:.6g}, flagged={report.flagged}, "
        f"roc_auc={report.metrics.roc_auc}, pr_auc={report.metrics.pr_auc}"
    )
    return report


def write_scores_csv(report: AnomalyReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"offset": report.offsets, "score": report.scores, "label": report.labels, "flag": report.flags})
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote scores to {path}")
    return path


def write_metrics_json(report: AnomalyReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote metrics to {path}")
    return path
