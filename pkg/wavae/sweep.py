"""
One-factor-at-a-time hyperparameter sweeps.

Each setting changes exactly one ``TrainConfig`` field from the base config
and keeps the seed, so rows differ only by the swept value.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
from tqdm import tqdm

from .config_loader import ConfigError
from .data import SeriesFrame
from .objective import TrainingDivergedError
from .train import TrainConfig, run_experiment

logger = logging.getLogger(__name__)

SWEEP_FILE = Path("metrics") / "sweep.csv"

# Value ranges of the standard sensitivity study, addressable as preset:<key>
PRESET_GRIDS: Dict[str, Tuple[Any, ...]] = {
    "zdim": (8, 10, 12, 14, 16, 18, 20),
    "beta": (1e-5, 5e-5, 1e-4, 5e-4, 1e-3),
    "recon": ("mse", "bce", "robust1", "robust2"),
    "mi_weight": (0.1, 0.2, 0.3, 0.4, 0.5),
    "disc_layers": (3, 4, 5, 6),
    "aug": ("mm", "ms", "sm", "ss"),
    "seqlen": (8, 16, 32, 64, 96),
    "hidden": (1, 2, 3, 4, 8, 16, 32, 64, 128, 256),
    "batch": (32, 64, 128),
    "lr": (0.001, 0.01, 0.1),
    "epochs": (10, 20, 30, 40, 50),
}

METRIC_COLUMNS = ("roc_auc", "pr_auc", "precision", "recall", "f1", "kappa", "tp", "fp", "fn", "tn", "threshold")


@dataclass
class SweepRow:
    key: str
    value: Any
    status: str = "ok"
    final_loss: Optional[float] = None
    metrics: Dict[str, Any] = field(default_factory=dict)
    error: str = ""

    @property
    def label(self) -> str:
        return "default" if not self.key else f"{self.key}={self.value}"

    def to_record(self) -> Dict[str, Any]:
        record = {"key": self.key or "default", "value": "" if not self.key else self.value, "status": self.status}
        record["final_loss"] = self.final_loss
        for column in METRIC_COLUMNS:
            record[column] = self.metrics.get(column)
        record["error"] = self.error
        return record


def parse_grid(specs: Union[str, Sequence[str]]) -> Dict[str, List[Any]]:
    """
    Parse ``key=v1,v2,...`` or ``preset:<key>`` entries into typed values.

    Several entries may be given as a sequence or separated by ``;``.
    """
    if isinstance(specs, str):
        specs = [specs]
    grid: Dict[str, List[Any]] = {}
    for spec in specs:
        for entry in filter(None, (part.strip() for part in spec.split(";"))):
            if entry.startswith("preset:"):
                key = entry[len("preset:") :].strip()
                if key not in PRESET_GRIDS:
                    raise ConfigError(f"No preset grid for {key!r}; known: {', '.join(sorted(PRESET_GRIDS))}")
                raw_values: Sequence[Any] = PRESET_GRIDS[key]
            else:
                key, sep, rest = entry.partition("=")
                key = key.strip()
                raw_values = [v.strip() for v in rest.split(",") if v.strip()]
                if not sep or not raw_values:
                    raise ConfigError(f"Grid entry {entry!r} must look like key=v1,v2 or preset:<key>")
            if key in grid:
                raise ConfigError(f"Grid key {key!r} given twice")
            grid[key] = [TrainConfig.coerce(key, value) for value in raw_values]
    return grid


# Keys whose list value is a single setting rather than a grid
LIST_VALUED_KEYS = ("anomaly_classes",)


def split_run_config(mapping: Dict[str, Any]) -> Tuple[Dict[str, Any], Dict[str, List[Any]]]:
    """Separate a run config into scalar settings and list-valued grid entries."""
    scalars: Dict[str, Any] = {}
    grid: Dict[str, List[Any]] = {}
    for key, value in mapping.items():
        if isinstance(value, list) and key not in LIST_VALUED_KEYS:
            if not value:
                raise ConfigError(f"Grid list for {key!r} is empty")
            grid[key] = [TrainConfig.coerce(key, v) for v in value]
        else:
            scalars[key] = value
    return scalars, grid


def merge_grids(*grids: Dict[str, List[Any]]) -> Dict[str, List[Any]]:
    merged: Dict[str, List[Any]] = {}
    for grid in grids:
        for key, values in grid.items():
            if key in merged:
                raise ConfigError(f"Grid key {key!r} given twice")
            merged[key] = list(values)
    return merged


def settings(base: TrainConfig, grid: Dict[str, List[Any]]) -> List[Tuple[str, Any, TrainConfig]]:
    """Every (key, value, config) the sweep will run, in grid order; empty grid means the base run."""
    if not grid:
        return [("", "", base.validate())]
    runs = []
    for key, values in grid.items():
        for value in values:
            runs.append((key, value, base.override(**{key: value})))
    return runs


def _run_one(key: str, value: Any, config: TrainConfig, series: SeriesFrame, out_dir: Optional[Path]) -> SweepRow:
    row = SweepRow(key, value)
    run_dir = None if out_dir is None else out_dir / "sweep" / row.label
    try:
        result = run_experiment(config, series, out_dir=run_dir)
    except (TrainingDivergedError, ValueError) as exc:
        logger.warning(f"Sweep setting {row.label} failed: {exc}")
        row.status, row.error = "failed", str(exc)
        return row
    row.final_loss = result.report.epochs[-1].total if result.report.epochs else None
    row.metrics = result.anomaly.to_dict()
    logger.info(f"Sweep {row.label}: roc_auc={row.metrics.get('roc_auc')} pr_auc={row.metrics.get('pr_auc')}")
    return row


def sweep(
    base: TrainConfig,
    grid: Dict[str, List[Any]],
    series: SeriesFrame,
    out_dir: Optional[Union[str, Path]] = None,
    workers: int = 1,
    progress: bool = False,
) -> List[SweepRow]:
    """
    Run every setting and return rows in grid order.

    With ``workers > 1`` settings run on a thread pool; each writes into its
    own ``sweep/<key>=<value>`` directory.
    """
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    runs = settings(base, grid)
    out_dir = None if out_dir is None else Path(out_dir)
    logger.info(f"Sweeping {len(runs)} setting(s) over {', '.join(grid) or 'defaults'} with {workers} worker(s)")

    if workers == 1:
        rows = [_run_one(k, v, c, series, out_dir) for k, v, c in tqdm(runs, desc="Sweep", disable=not progress)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_run_one, k, v, c, series, out_dir) for k, v, c in runs]
            rows = [f.result() for f in tqdm(futures, desc="Sweep", disable=not progress)]

    if out_dir is not None:
        write_sweep_csv(rows, out_dir / SWEEP_FILE)
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = ["key", "value", "status", "final_loss", *METRIC_COLUMNS, "error"]
    frame = pd.DataFrame([row.to_record() for row in rows], columns=columns)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {len(rows)} sweep row(s) to {path}")
    return path


__all__ = ["PRESET_GRIDS", "SweepRow", "parse_grid", "settings", "sweep", "write_sweep_csv"]
