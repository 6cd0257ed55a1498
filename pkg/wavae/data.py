"""CSV ingestion, sliding windows, train/eval split and synthetic series."""

import logging
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .numerics import Rng

logger = logging.getLogger(__name__)

# Binarisation conventions of the public TSAD benchmarks: label values listed
# here are anomalies, everything else is normal.
CLASS_MAPPINGS = {
    "gd": (1, 2),
    "hss": (1,),
    "s5": (1,),
    "td": (0,),
    "ecg": (3, 4, 5),
}

ANOMALY_KINDS = ("spike", "level-shift", "dropout")


class DataFormatError(ValueError):
    """Input series file could not be turned into a SeriesFrame."""


@dataclass
class SeriesFrame:
    """A multivariate series with point labels (1 = anomaly)."""

    values: np.ndarray
    labels: np.ndarray
    feature_names: List[str]
    timestamps: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.shape[1] < 1:
            raise DataFormatError("Series needs at least one feature channel")
        if len(self.labels) != len(self.values):
            raise DataFormatError(f"Label length {len(self.labels)} does not match series length {len(self.values)}")
        if len(self.feature_names) != self.values.shape[1]:
            raise DataFormatError(f"{len(self.feature_names)} feature names for {self.values.shape[1]} channels")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int) -> "SeriesFrame":
        stamps = None if self.timestamps is None else self.timestamps[start:stop]
        return SeriesFrame(self.values[start:stop], self.labels[start:stop], list(self.feature_names), stamps)

    def to_csv(self, path: Union[str, Path], label_column: str = "label") -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(self.values, columns=self.feature_names)
        if self.timestamps is not None:
            frame.insert(0, "timestamp", self.timestamps)
        frame[label_column] = self.labels
        frame.to_csv(path, index=False, float_format="%.17g")
        return path


@dataclass
class WindowBatch:
    """Fixed-length windows (b, s, c) with per-window labels and source offsets."""

    windows: np.ndarray
    labels: np.ndarray
    offsets: np.ndarray

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def flat(self) -> np.ndarray:
        """Windows flattened to (b, s*c) for the fully-connected model."""
        return self.windows.reshape(self.windows.shape[0], -1)

    def take(self, index: np.ndarray) -> "WindowBatch":
        return WindowBatch(self.windows[index], self.labels[index], self.offsets[index])


def resolve_anomaly_classes(spec: Union[str, Sequence[int]]) -> Tuple[int, ...]:
    """Accept a preset name (``gd``), a comma list (``1,2``) or a sequence of ints."""
    if isinstance(spec, str):
        key = spec.strip().lower()
        if key in CLASS_MAPPINGS:
            return CLASS_MAPPINGS[key]
        try:
            return tuple(int(part) for part in key.split(",") if part.strip())
        except ValueError as exc:
            known = ", ".join(sorted(CLASS_MAPPINGS))
            raise DataFormatError(f"Unknown anomaly class spec {spec!r}; use integers or one of {known}") from exc
    return tuple(int(v) for v in spec)


def load_csv(
    path: Union[str, Path],
    label_column: Union[str, int] = "label",
    feature_columns: Optional[Sequence[Union[str, int]]] = None,
    anomaly_classes: Union[str, Sequence[int]] = (1,),
    timestamp_column: Optional[Union[str, int]] = None,
    delimiter: Optional[str] = None,
    header: bool = True,
) -> SeriesFrame:
    """
    Load a labelled series.

    One row per timestamp, one numeric column per feature and an integer label
    column. Label values in ``anomaly_classes`` become 1, all others 0. With
    ``feature_columns`` unset, every column except the label and timestamp is
    a feature.

    Without a ``header`` row (UCR-style files) columns are addressed by their
    0-based index, e.g. ``label_column=0``. The delimiter defaults to a tab for
    ``.tsv`` files and a comma otherwise.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Series file not found: {path}")
    if delimiter is None:
        delimiter = "\t" if path.suffix.lower() == ".tsv" else ","
    label_column = str(label_column)
    timestamp_column = None if timestamp_column is None else str(timestamp_column)
    feature_columns = [str(c) for c in feature_columns] if feature_columns else None
    try:
        frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False, header=0 if header else None)
        frame.columns = [str(c) for c in frame.columns]
    except pd.errors.EmptyDataError as exc:
        raise DataFormatError(f"{path}: empty series") from exc
    if frame.empty:
        raise DataFormatError(f"{path}: empty series")

    if label_column not in frame.columns:
        raise DataFormatError(f"{path}: missing label column {label_column!r}")
    if timestamp_column is not None and timestamp_column not in frame.columns:
        raise DataFormatError(f"{path}: missing timestamp column {timestamp_column!r}")
    excluded = {label_column, timestamp_column}
    features = list(feature_columns) if feature_columns else [c for c in frame.columns if c not in excluded]
    missing = [c for c in features if c not in frame.columns]
    if missing:
        raise DataFormatError(f"{path}: missing feature column(s) {', '.join(missing)}")
    if not features:
        raise DataFormatError(f"{path}: no feature columns")

    columns = []
    for name in features:
        numeric = pd.to_numeric(frame[name].str.strip(), errors="coerce")
        bad = numeric.isna() | ~np.isfinite(numeric.to_numpy(dtype=np.float64, na_value=np.nan))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataFormatError(f"{path}: non-numeric value {frame[name].iloc[row]!r} at row {row + 1}, column {name!r}")
        columns.append(numeric.to_numpy(dtype=np.float64))

    raw_labels = pd.to_numeric(frame[label_column].str.strip(), errors="coerce")
    as_float = raw_labels.to_numpy(dtype=np.float64, na_value=np.nan)
    unmappable = np.isnan(as_float) | (as_float != np.round(as_float))
    if unmappable.any():
        row = int(np.flatnonzero(unmappable)[0])
        raise DataFormatError(f"{path}: unmappable label {frame[label_column].iloc[row]!r} at row {row + 1}")
    classes = resolve_anomaly_classes(anomaly_classes)
    labels = np.isin(as_float.astype(np.int64), classes).astype(np.int64)

    timestamps = frame[timestamp_column].to_numpy() if timestamp_column else None
    series = SeriesFrame(np.column_stack(columns), labels, features, timestamps)
    logger.info(f"Loaded {path.name}: T={series.length}, c={series.channels}, anomalous points={int(labels.sum())}")
    return series


def window(series: SeriesFrame, s: int, stride: int = 1) -> WindowBatch:
    """
    Cut windows at offsets 0, stride, 2*stride, ... while offset + s <= T.

    A window is labelled 1 if any covered point is anomalous.
    """
    if s < 1 or stride < 1:
        raise ValueError(f"Window length and stride must be >= 1, got s={s}, stride={stride}")
    if s > series.length:
        raise ValueError(f"Window length {s} exceeds series length {series.length}")
    offsets = np.arange(0, series.length - s + 1, stride)
    views = np.lib.stride_tricks.sliding_window_view(series.values, s, axis=0)[offsets]
    windows = np.ascontiguousarray(np.swapaxes(views, 1, 2))
    label_views = np.lib.stride_tricks.sliding_window_view(series.labels, s)[offsets]
    return WindowBatch(windows, label_views.max(axis=1).astype(np.int64), offsets.astype(np.int64))


def batch_indices(n: int, batch_size: int, rng: Optional[Rng] = None) -> Iterator[np.ndarray]:
    """Index arrays of consecutive batches over ``n`` items; shuffled when an rng is given."""
    if batch_size < 1:
        raise ValueError(f"Batch size must be >= 1, got {batch_size}")
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def iter_batches(
    streams: Sequence[WindowBatch], batch_size: int, rng: Optional[Rng] = None
) -> Iterator[Tuple[WindowBatch, ...]]:
    """
    Batches drawn with one shared order from streams of equal length.

    Used for the paired raw and augmented streams, so row i of every yielded
    batch comes from the same source window.
    """
    sizes = {len(stream) for stream in streams}
    if len(sizes) != 1:
        raise ValueError(f"Streams must have equal lengths, got {sorted(len(s) for s in streams)}")
    for index in batch_indices(sizes.pop(), batch_size, rng):
        yield tuple(stream.take(index) for stream in streams)


def train_eval_split(series: SeriesFrame, train_ratio: float, s: int) -> Tuple[SeriesFrame, SeriesFrame]:
    """Contiguous prefix for training, suffix for evaluation, with an s-1 point gap."""
    if not 0 < train_ratio < 1:
        raise ValueError(f"train_ratio must be in (0, 1), got {train_ratio}")
    cut = int(math.floor(series.length * train_ratio))
    train = series.slice(0, cut)
    evaluation = series.slice(cut + s - 1, series.length)
    if train.length < s or evaluation.length < s:
        raise ValueError(
            f"Series of length {series.length} too short to split at {train_ratio} with window length {s} "
            f"(train {train.length}, eval {evaluation.length})"
        )
    return train, evaluation


# ---------------------------------------------------------------------------
# Synthetic benchmark series
# ---------------------------------------------------------------------------


@dataclass
class SynthSpec:
    """Sine channels plus Gaussian noise with injected, labelled anomalies."""

    length: int = 2000
    channels: int = 2
    periods: Tuple[float, ...] = (50.0, 80.0)
    amplitudes: Tuple[float, ...] = (1.0, 0.7)
    noise_sigma: float = 0.1
    anomaly_kinds: Tuple[str, ...] = ("spike",)
    contamination: float = 0.02
    magnitude: float = 5.0
    duration_range: Tuple[int, int] = (5, 15)
    edge_margin: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.contamination < 0.5:
            raise ValueError(f"contamination must be in [0, 0.5), got {self.contamination}")
        unknown = [k for k in self.anomaly_kinds if k not in ANOMALY_KINDS]
        if unknown:
            raise ValueError(f"Unknown anomaly kind(s) {unknown}; expected {ANOMALY_KINDS}")
        if self.length < 1 or self.channels < 1:
            raise ValueError("length and channels must be >= 1")

    def channel_value(self, values: Tuple[float, ...], channel: int) -> float:
        return values[channel % len(values)]


SYNTH_PRESETS = {
    "default": SynthSpec(),
    "hard": SynthSpec(magnitude=3.0),
}


def _free_starts(free: np.ndarray, duration: int, low: int, high: int) -> np.ndarray:
    """Start positions in [low, high - duration] whose span and neighbours are all free."""
    padded = np.concatenate([[False], free, [False]])
    # a span [t, t+duration) plus one guard point on each side must be free
    span = duration + 2
    csum = np.concatenate([[0], np.cumsum(padded.astype(np.int64))])
    starts = np.arange(low, high - duration + 1)
    if starts.size == 0:
        return starts
    # padded index of t-1 is t, guard window covers padded[t : t + span]
    counts = csum[starts + span] - csum[starts]
    return starts[counts == span]


def synth(spec: SynthSpec) -> SeriesFrame:
    """
    Generate a seeded synthetic series.

    Exactly floor(contamination * T) points are anomalous. Anomalies never
    overlap or touch and stay ``edge_margin`` points away from both ends.
    Spikes shift one channel at one point by ``magnitude * noise_sigma``;
    level shifts add the same offset over a drawn duration; dropouts hold
    one channel at zero over a drawn duration.
    """
    rng = Rng(spec.seed).spawn("synth")
    t = np.arange(spec.length, dtype=np.float64)
    phases = rng.uniform(0.0, 2.0 * np.pi, spec.channels)
    clean = np.column_stack(
        [
            spec.channel_value(spec.amplitudes, c) * np.sin(2.0 * np.pi * t / spec.channel_value(spec.periods, c) + phases[c])
            for c in range(spec.channels)
        ]
    )
    values = clean + spec.noise_sigma * rng.normal((spec.length, spec.channels))
    labels = np.zeros(spec.length, dtype=np.int64)

    budget = int(math.floor(spec.contamination * spec.length))
    if spec.anomaly_kinds and spec.contamination > 0 and budget < 1:
        message = f"contamination {spec.contamination} x length {spec.length} < 1: no anomalies injected"
        logger.warning(message)
        warnings.warn(message, UserWarning)
    offset = spec.magnitude * spec.noise_sigma
    free = np.ones(spec.length, dtype=bool)
    low, high = spec.edge_margin, spec.length - spec.edge_margin

    while budget > 0 and spec.anomaly_kinds:
        kind = spec.anomaly_kinds[int(rng.integers(0, len(spec.anomaly_kinds)))]
        if kind == "spike":
            duration = 1
        else:
            duration = int(rng.integers(spec.duration_range[0], spec.duration_range[1] + 1))
        duration = min(duration, budget)
        starts = _free_starts(free, duration, low, high)
        if starts.size == 0:
            raise ValueError(f"No room left to place {budget} anomalous points; lower contamination or lengthen the series")
        start = int(starts[int(rng.integers(0, starts.size))])
        channel = int(rng.integers(0, spec.channels))
        span = slice(start, start + duration)
        if kind == "dropout":
            values[span, channel] = 0.0
        else:
            values[span, channel] += offset
        labels[span] = 1
        free[span] = False
        budget -= duration

    names = [f"x{c}" for c in range(spec.channels)]
    return SeriesFrame(values, labels, names)


def synth_spec_from_preset(name: str, **overrides) -> SynthSpec:
    if name not in SYNTH_PRESETS:
        raise ValueError(f"Unknown synthetic preset {name!r}; expected one of {sorted(SYNTH_PRESETS)}")
    return replace(SYNTH_PRESETS[name], **overrides)
