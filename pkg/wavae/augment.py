"""
Weak augmentations: per-channel normalizations applied to windows before
they reach the model.

Statistics are taken over the time axis of each window (``per-window``) or,
with ``per-series`` scope, over the whole series before windowing.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_EPS_NORM = 1e-8
NORM_SCOPES = ("per-window", "per-series")


class AugmentKindName(str, Enum):
    STANDARDIZE = "standardize"
    MINMAX = "minmax"
    IDENTITY = "identity"


@dataclass(frozen=True)
class AugmentKind:
    """A weak augmentation operator and its degenerate-scale guard."""

    name: AugmentKindName
    eps_norm: float = DEFAULT_EPS_NORM

    def __post_init__(self):
        if not self.eps_norm > 0:
            raise ValueError(f"eps_norm must be positive, got {self.eps_norm}")

    def apply(self, x: np.ndarray, axis: int = -2, reference: Optional[np.ndarray] = None) -> np.ndarray:
        """Normalize ``x`` along ``axis``; statistics come from ``reference`` when given."""
        if self.name is AugmentKindName.STANDARDIZE:
            return standardize(x, self.eps_norm, axis=axis, reference=reference)
        if self.name is AugmentKindName.MINMAX:
            return minmax(x, self.eps_norm, axis=axis, reference=reference)
        return np.array(x, dtype=np.float64, copy=True)

    @property
    def bounded(self) -> bool:
        """Output guaranteed inside [0, 1]."""
        return self.name is AugmentKindName.MINMAX


STANDARDIZE = AugmentKind(AugmentKindName.STANDARDIZE)
MINMAX = AugmentKind(AugmentKindName.MINMAX)
IDENTITY = AugmentKind(AugmentKindName.IDENTITY)

_LETTERS = {"m": MINMAX, "s": STANDARDIZE}
AUG_CODES = ("mm", "ms", "sm", "ss", "none")


def parse_aug_code(code: str, eps_norm: float = DEFAULT_EPS_NORM) -> Tuple[AugmentKind, AugmentKind]:
    """
    Turn a two-letter code into (raw kind, augmented kind).

    First letter is the raw stream, second the augmented stream: ``m`` for
    min-max, ``s`` for standardization. ``none`` leaves both streams untouched.
    """
    code = code.strip().lower()
    if code == "none":
        raw, aug = IDENTITY, IDENTITY
    elif len(code) == 2 and all(ch in _LETTERS for ch in code):
        raw, aug = _LETTERS[code[0]], _LETTERS[code[1]]
    else:
        raise ValueError(f"Unknown augmentation code {code!r}; expected one of {', '.join(AUG_CODES)}")
    return replace(raw, eps_norm=eps_norm), replace(aug, eps_norm=eps_norm)


def _reference(x: np.ndarray, reference: Optional[np.ndarray], axis: int, name: str) -> np.ndarray:
    stats = x if reference is None else np.asarray(reference, dtype=np.float64)
    if x.shape[axis] == 0 or stats.shape[axis] == 0:
        raise ValueError(f"{name} needs a non-empty window")
    return stats


def standardize(
    x: np.ndarray, eps_norm: float = DEFAULT_EPS_NORM, axis: int = -2, reference: Optional[np.ndarray] = None
) -> np.ndarray:
    """(x - mean) / max(population std, eps_norm) along the time axis."""
    x = np.asarray(x, dtype=np.float64)
    stats = _reference(x, reference, axis, "standardize")
    mean = stats.mean(axis=axis, keepdims=True)
    sigma = np.sqrt(((stats - mean) ** 2).mean(axis=axis, keepdims=True))
    return (x - mean) / np.maximum(sigma, eps_norm)


def minmax(
    x: np.ndarray, eps_norm: float = DEFAULT_EPS_NORM, axis: int = -2, reference: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    (x - min) / max(max - min, eps_norm) along the time axis.

    With a ``reference`` the range is the reference's, so ``x`` may leave [0, 1].
    """
    x = np.asarray(x, dtype=np.float64)
    stats = _reference(x, reference, axis, "minmax")
    low = stats.min(axis=axis, keepdims=True)
    span = stats.max(axis=axis, keepdims=True) - low
    return (x - low) / np.maximum(span, eps_norm)


def make_pair(batch, raw_kind: AugmentKind, aug_kind: AugmentKind):
    """
    Build the raw and augmented streams for a ``WindowBatch``.

    Windows are (b, s, c); statistics run over ``s`` per window and channel.
    Labels and offsets are shared by both returned batches.
    """
    raw = replace(batch, windows=raw_kind.apply(batch.windows, axis=1))
    augmented = replace(batch, windows=aug_kind.apply(batch.windows, axis=1))
    return raw, augmented
