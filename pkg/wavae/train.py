"""
Training loop for the weakly augmented VAE.

Every epoch shuffles the paired windows with the ``batches`` stream, builds
the raw and augmented batches, and takes one Adam step on the shared
encoder/decoder per batch. In adversarial mode each batch also runs the
discriminator stage.
"""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from . import checkpoint, detect
from .augment import AUG_CODES, NORM_SCOPES, AugmentKind, make_pair, parse_aug_code
from .config_loader import ConfigError
from .data import SeriesFrame, WindowBatch, iter_batches, resolve_anomaly_classes, train_eval_split, window
from .mutual_info import Discriminator, PseudoLabels, discriminator_optimizer
from .numerics import Adam, Rng
from .objective import MiMode, ObjectiveWeights, TrainingDivergedError, generator_step, two_stage_schedule
from .vae import LossBreakdown, ModelParams, ReconKind, ReconLossKind

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = Path("checkpoint") / "model.ckpt"
TRAIN_LOG_FILE = Path("reports") / "train.jsonl"
SCORES_FILE = Path("reports") / "scores.csv"
METRICS_FILE = Path("metrics") / "metrics.json"


@dataclass
class TrainConfig:
    """Every knob of one training run. Field names double as config-file keys."""

    mi_mode: str = "contrast"
    recon: str = "mse"
    alpha1: float = 0.1
    alpha2: float = 0.1
    sigma_lik: float = 1.0
    beta: float = 0.001
    zdim: int = 16
    hidden: int = 32
    seqlen: int = 32
    stride: int = 1
    eval_stride: Optional[int] = None
    batch: int = 64
    lr: float = 0.001
    epochs: int = 50
    tau: float = 0.1
    mi_weight: float = 0.1
    disc_layers: int = 3
    disc_hidden: int = 32
    disc_steps: int = 1
    disc_separate: bool = False
    aug: str = "mm"
    norm_scope: str = "per-series"
    eps_norm: float = 1e-8
    seed: int = 0
    percentile: float = 0.99
    train_ratio: float = 0.7
    label_column: str = "label"
    header: bool = True
    anomaly_classes: str = "1"

    @classmethod
    def field_names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def coerce(cls, key: str, value: Any) -> Any:
        """Convert a raw config or grid value to the type of field ``key``."""
        defaults = cls()
        if key not in cls.field_names():
            raise ConfigError(f"Unknown config key {key!r}")
        if value is None:
            return None
        if key == "eval_stride":
            target = int
        elif key == "anomaly_classes":
            return ",".join(str(v) for v in value) if isinstance(value, (list, tuple)) else str(value)
        else:
            target = type(getattr(defaults, key))
        try:
            if target is bool:
                if isinstance(value, str):
                    lowered = value.strip().lower()
                    if lowered not in ("true", "false", "1", "0", "yes", "no"):
                        raise ValueError(value)
                    return lowered in ("true", "1", "yes")
                return bool(value)
            if target is int:
                number = float(value)
                if number != int(number):
                    raise ValueError(value)
                return int(number)
            if target is float:
                return float(value)
            return str(value).strip().lower() if key in ("mi_mode", "recon", "aug", "norm_scope") else str(value)
        except (TypeError, ValueError, OverflowError) as exc:
            raise ConfigError(f"Invalid value {value!r} for {key} (expected {target.__name__})") from exc

    @classmethod
    def from_mapping(cls, *layers: Mapping[str, Any]) -> "TrainConfig":
        """Merge mappings left to right (later wins) on top of the defaults and validate."""
        merged: Dict[str, Any] = {}
        for layer in layers:
            for key, value in (layer or {}).items():
                merged[key] = cls.coerce(key, value)
        return cls(**merged).validate()

    def override(self, **changes: Any) -> "TrainConfig":
        return replace(self, **{k: self.coerce(k, v) for k, v in changes.items()}).validate()

    def validate(self) -> "TrainConfig":
        positive_ints = ("zdim", "hidden", "seqlen", "stride", "batch", "epochs", "disc_hidden", "disc_steps")
        for name in positive_ints:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.eval_stride is not None and self.eval_stride < 1:
            raise ConfigError(f"eval_stride must be >= 1, got {self.eval_stride}")
        for name in ("lr", "tau", "eps_norm", "alpha1", "alpha2", "sigma_lik"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("beta", "mi_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("percentile", "train_ratio"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"{name} must be in (0, 1), got {getattr(self, name)}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.mi_mode not in {m.value for m in MiMode}:
            raise ConfigError(f"Unknown mi_mode {self.mi_mode!r}; expected contrast, adversarial or none")
        if self.recon not in {k.value for k in ReconKind}:
            raise ConfigError(f"Unknown recon {self.recon!r}; expected mse, bce, robust1 or robust2")
        if self.aug not in AUG_CODES:
            raise ConfigError(f"Unknown aug {self.aug!r}; expected one of {', '.join(AUG_CODES)}")
        if self.norm_scope not in NORM_SCOPES:
            raise ConfigError(f"Unknown norm_scope {self.norm_scope!r}; expected one of {', '.join(NORM_SCOPES)}")
        if self.mi_mode == MiMode.ADVERSARIAL.value and self.disc_layers < 2:
            raise ConfigError(f"adversarial mode needs disc_layers >= 2, got {self.disc_layers}")
        if self.recon_kind().sigmoid_output and not all(kind.bounded for kind in self.aug_kinds()):
            raise ConfigError(f"{self.recon} likelihood needs [0, 1] inputs on both streams; use aug mm, not {self.aug}")
        resolve_anomaly_classes(self.anomaly_classes)
        return self

    @property
    def scoring_stride(self) -> int:
        return self.eval_stride or self.seqlen

    def recon_kind(self) -> ReconLossKind:
        return ReconLossKind(ReconKind(self.recon), self.alpha1, self.alpha2, self.sigma_lik)

    def objective_weights(self) -> ObjectiveWeights:
        return ObjectiveWeights(self.beta, self.recon_kind(), MiMode(self.mi_mode), self.tau, self.mi_weight)

    def aug_kinds(self) -> Tuple[AugmentKind, AugmentKind]:
        return parse_aug_code(self.aug, self.eps_norm)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainReport:
    """Epoch-mean losses of one run. One entry per epoch."""

    epochs: List[LossBreakdown] = field(default_factory=list)
    checksums: List[str] = field(default_factory=list)
    seed: int = 0
    wall_clock_seconds: float = 0.0
    checkpoint_path: Optional[Path] = None

    def to_jsonl(self) -> str:
        lines = [json.dumps({"epoch": i + 1, **b.to_dict()}, sort_keys=True) for i, b in enumerate(self.epochs)]
        return "\n".join(lines) + ("\n" if lines else "")

    def write_jsonl(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl())
        logger.info(f"Wrote training report to {path}")
        return path


@dataclass
class ExperimentResult:
    params: ModelParams
    disc: Optional[Discriminator]
    report: TrainReport
    anomaly: detect.AnomalyReport
    config: TrainConfig


def prepare_streams(
    series: SeriesFrame, config: TrainConfig, stride: int, reference: Optional[SeriesFrame] = None
) -> Tuple[WindowBatch, WindowBatch]:
    """
    Window a series and return its (raw, augmented) model inputs.

    With ``per-series`` scope the normalization statistics come from
    ``reference`` (the training series) when given, else from ``series``.
    """
    raw_kind, aug_kind = config.aug_kinds()
    if config.norm_scope == "per-series":
        stats = None if reference is None else reference.values
        raw_series = replace(series, values=raw_kind.apply(series.values, axis=0, reference=stats))
        aug_series = replace(series, values=aug_kind.apply(series.values, axis=0, reference=stats))
        return window(raw_series, config.seqlen, stride), window(aug_series, config.seqlen, stride)
    return make_pair(window(series, config.seqlen, stride), raw_kind, aug_kind)


def _epoch_mean(rows: List[LossBreakdown]) -> LossBreakdown:
    def mean_of(name: str) -> Optional[float]:
        values = [getattr(r, name) for r in rows if getattr(r, name) is not None]
        return math.fsum(values) / len(values) if values else None

    return LossBreakdown(**{f.name: mean_of(f.name) for f in fields(LossBreakdown)})


def _assert_shared(params: ModelParams, optimizer: Adam) -> None:
    for name, tensor in params.named_tensors().items():
        if optimizer.params[name] is not tensor:
            raise RuntimeError(f"Optimizer tensor {name} is no longer the model's shared parameter")


def train(
    config: TrainConfig,
    series: SeriesFrame,
    out_dir: Optional[Union[str, Path]] = None,
    progress: bool = False,
) -> Tuple[ModelParams, Optional[Discriminator], TrainReport]:
    """
    Fit the shared encoder/decoder on ``series``.

    With ``out_dir`` the final checkpoint and the per-epoch JSON lines are
    written under it.
    """
    config.validate()
    started = time.perf_counter()
    raw, aug = prepare_streams(series, config, config.stride)
    if len(raw) == 0:
        raise ValueError(f"Series of length {series.length} yields no training windows of length {config.seqlen}")

    root = Rng(config.seed)
    batch_rng, reparam_rng = root.spawn("batches"), root.spawn("reparam")
    weights = config.objective_weights()
    params = ModelParams.init(
        raw.flat.shape[1], config.hidden, config.zdim, weights.recon.sigmoid_output, root.spawn("init")
    )
    optimizer = Adam(params.named_tensors(), lr=config.lr)

    disc, disc_optimizer = None, None
    if weights.mi_mode is MiMode.ADVERSARIAL:
        disc_rng = root.spawn("disc-init")
        disc = Discriminator.init(config.zdim, config.disc_hidden, config.disc_layers, disc_rng, config.disc_separate)
        disc_optimizer = discriminator_optimizer(disc, config.lr)
    labels = PseudoLabels()

    report = TrainReport(seed=config.seed)
    logger.info(
        f"Training {config.mi_mode} model on {len(raw)} windows (s={config.seqlen}, c={series.channels}, "
        f"zdim={config.zdim}, hidden={config.hidden}) for {config.epochs} epochs"
    )
    for epoch in tqdm(range(1, config.epochs + 1), desc="Training", unit="epoch", disable=not progress):
        rows = []
        for step, (raw_batch, aug_batch) in enumerate(iter_batches([raw, aug], config.batch, batch_rng)):
            x_r, x_a = raw_batch.flat, aug_batch.flat
            if disc is not None:
                breakdown = two_stage_schedule(
                    params, optimizer, x_r, x_a, weights, reparam_rng, disc, disc_optimizer, labels, config.disc_steps
                )
            else:
                breakdown, _, _ = generator_step(params, optimizer, x_r, x_a, weights, reparam_rng)
            logger.debug(f"epoch {epoch} batch {step}: total={breakdown.total:.6g}")
            rows.append(breakdown)

        _assert_shared(params, optimizer)
        mean = _epoch_mean(rows)
        report.epochs.append(mean)
        report.checksums.append(params.checksum())
        message = (
            f"Epoch {epoch}/{config.epochs}: total={mean.total:.6g} recon_raw={mean.recon_raw:.6g} "
            f"recon_aug={mean.recon_aug:.6g} mi={mean.mi_term:.6g}"
        )
        if mean.mi_bound is not None:
            message += f" mi_bound={mean.mi_bound:.6g}"
        if mean.disc_accuracy is not None:
            message += f" disc_loss={mean.disc_loss:.6g} disc_accuracy={mean.disc_accuracy:.3f}"
        logger.info(message)

    report.wall_clock_seconds = time.perf_counter() - started
    if out_dir is not None:
        out_dir = Path(out_dir)
        report.checkpoint_path = checkpoint.save(out_dir / CHECKPOINT_FILE, params, disc, config.to_dict())
        report.write_jsonl(out_dir / TRAIN_LOG_FILE)
    return params, disc, report


def score_series(
    params: ModelParams, series: SeriesFrame, config: TrainConfig, reference: Optional[SeriesFrame] = None
) -> Tuple[np.ndarray, WindowBatch]:
    """Raw-stream scores for every scoring window of ``series``."""
    raw, _ = prepare_streams(series, config, config.scoring_stride, reference)
    return detect.score(params, raw), raw


def evaluate_series(
    params: ModelParams,
    series: SeriesFrame,
    config: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    offset_base: int = 0,
    reference: Optional[SeriesFrame] = None,
) -> detect.AnomalyReport:
    scores, raw = score_series(params, series, config, reference)
    anomaly = detect.evaluate(scores, raw.labels, config.percentile, raw.offsets + offset_base)
    if out_dir is not None:
        out_dir = Path(out_dir)
        detect.write_scores_csv(anomaly, out_dir / SCORES_FILE)
        detect.write_metrics_json(anomaly, out_dir / METRICS_FILE)
    return anomaly


def evaluation_split(series: SeriesFrame, config: TrainConfig) -> Tuple[SeriesFrame, SeriesFrame, int]:
    """(train part, eval part, index of the first eval point in ``series``)."""
    train_part, eval_part = train_eval_split(series, config.train_ratio, config.seqlen)
    return train_part, eval_part, series.length - eval_part.length


def run_experiment(
    config: TrainConfig,
    series: SeriesFrame,
    out_dir: Optional[Union[str, Path]] = None,
    progress: bool = False,
) -> ExperimentResult:
    """Split, train on the prefix, score and evaluate the suffix."""
    train_part, eval_part, eval_start = evaluation_split(series, config)
    params, disc, report = train(config, train_part, out_dir=out_dir, progress=progress)
    anomaly = evaluate_series(params, eval_part, config, out_dir=out_dir, offset_base=eval_start, reference=train_part)
    return ExperimentResult(params, disc, report, anomaly, config)


__all__ = [
    "ExperimentResult",
    "TrainConfig",
    "TrainReport",
    "TrainingDivergedError",
    "evaluate_series",
    "evaluation_split",
    "prepare_streams",
    "run_experiment",
    "score_series",
    "train",
]
