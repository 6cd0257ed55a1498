"""
Mutual-information couplers between raw and augmented latents.

``info_nce`` is the contrastive (shallow) coupler. The adversarial (deep)
coupler scores latents with a discriminator and uses the density-ratio
trick: log(psi / (1 - psi)) is the discriminator logit.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from . import numerics as nx
from .numerics import Adam, Rng, ShapeError, Tensor

logger = logging.getLogger(__name__)

LOGIT_BOUND = 15.0
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class InfoNceConfig:
    """Critic temperature and the weight of the MI term in the total objective."""

    tau: float = 0.1
    weight: float = 0.1

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"Temperature must be positive, got {self.tau}")
        if self.weight < 0:
            raise ValueError(f"MI weight must be >= 0, got {self.weight}")


def info_nce(z_r: Tensor, z_a: Tensor, tau: float) -> Tensor:
    """
    Temperature-scaled infoNCE with in-batch negatives.

    For row u the positive is z_a[u]; negatives are every other z_a[v] and
    every other raw latent z_r[v], v != u.
    """
    if z_r.shape != z_a.shape or z_r.data.ndim != 2:
        raise ShapeError(f"info_nce: latent shapes {z_r.shape} and {z_a.shape} must match and be (b, m)")
    b = z_r.shape[0]
    if b == 0:
        raise ValueError("info_nce needs at least one sample")
    if tau <= 0:
        raise ValueError(f"Temperature must be positive, got {tau}")

    cross = (z_r @ z_a.T) * (1.0 / tau)
    self_sim = (z_r @ z_r.T) * (1.0 / tau)
    mask = np.zeros((b, b))
    np.fill_diagonal(mask, -np.inf)
    logits = nx.concat([cross, self_sim + Tensor(mask)], axis=1)
    per_row = nx.logsumexp(logits, axis=1) - nx.diagonal(cross)
    return nx.mean(per_row)


def info_nce_bound(nce: float, batch_size: int) -> float:
    """Lower-bound estimate of I(z_r; z_a) from an infoNCE value: log(2b - 1) - infoNCE."""
    if batch_size < 1:
        raise ValueError(f"Batch size must be >= 1, got {batch_size}")
    return math.log(2 * batch_size - 1) - nce


class Discriminator:
    """
    Fully-connected critic m -> h -> ... -> 1 with leaky-rectifier hidden units.

    ``layers`` counts linear maps. With ``separate`` set, the augmented role
    (psi_a) gets its own stack; otherwise one stack serves both roles.
    """

    def __init__(self, stacks: List[List[Tuple[Tensor, Tensor]]]):
        if not 1 <= len(stacks) <= 2:
            raise ValueError("Discriminator holds one shared stack or two separate stacks")
        self.stacks = stacks

    @classmethod
    def init(cls, zdim: int, hidden: int, layers: int, rng: Rng, separate: bool = False) -> "Discriminator":
        if layers < 2:
            raise ValueError(f"Discriminator needs at least 2 layers, got {layers}")
        widths = [zdim] + [hidden] * (layers - 1) + [1]
        stacks = []
        for role in ("raw", "aug")[: 2 if separate else 1]:
            stack = []
            for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
                bound = math.sqrt(6.0 / (fan_in + fan_out))
                weight = nx.parameter(rng.uniform(-bound, bound, (fan_in, fan_out)), name=f"disc_{role}_w{i}")
                bias = nx.parameter(np.zeros(fan_out), name=f"disc_{role}_b{i}")
                stack.append((weight, bias))
            stacks.append(stack)
        return cls(stacks)

    @property
    def separate(self) -> bool:
        return len(self.stacks) == 2

    @property
    def layers(self) -> int:
        return len(self.stacks[0])

    @property
    def hidden(self) -> int:
        return self.stacks[0][0][0].shape[1]

    @property
    def zdim(self) -> int:
        return self.stacks[0][0][0].shape[0]

    def named_tensors(self) -> Dict[str, Tensor]:
        named = {}
        for stack in self.stacks:
            for weight, bias in stack:
                named[weight.name] = weight
                named[bias.name] = bias
        return named

    def _logits(self, stack, z: Tensor) -> Tensor:
        h = z
        for i, (weight, bias) in enumerate(stack):
            h = h @ weight + bias
            if i < len(stack) - 1:
                h = nx.leaky_relu(h, LEAKY_SLOPE)
        return nx.clip(nx.reshape(h, (h.shape[0],)), -LOGIT_BOUND, LOGIT_BOUND)

    def logits_raw(self, z: Tensor) -> Tensor:
        """Clamped logit of psi(z_r)."""
        return self._logits(self.stacks[0], z)

    def logits_aug(self, z: Tensor) -> Tensor:
        """Clamped logit of psi_a(z_a)."""
        return self._logits(self.stacks[-1], z)

    def psi(self, z: Tensor) -> Tensor:
        return nx.sigmoid(self.logits_raw(z))

    def psi_a(self, z: Tensor) -> Tensor:
        return nx.sigmoid(self.logits_aug(z))


@dataclass(frozen=True)
class PseudoLabels:
    """Raw latents labelled 1, augmented 0; ``swapped`` inverts both."""

    raw: int = 1
    aug: int = 0
    swapped: bool = False

    def __post_init__(self):
        if {self.raw, self.aug} - {0, 1}:
            raise ValueError("Pseudo-labels must be 0 or 1")

    def effective(self) -> Tuple[int, int]:
        if self.swapped:
            return 1 - self.raw, 1 - self.aug
        return self.raw, self.aug

    def swap(self) -> "PseudoLabels":
        return PseudoLabels(self.raw, self.aug, not self.swapped)


def adversarial_mi(z_r: Tensor, z_a: Tensor, disc: Discriminator) -> Tensor:
    """Batch mean of log(psi(z_r) / (1 - psi(z_r))) + log(psi_a(z_a) / (1 - psi_a(z_a)))."""
    if z_r.shape != z_a.shape:
        raise ShapeError(f"adversarial_mi: latent shapes {z_r.shape} and {z_a.shape} must match")
    return nx.mean(disc.logits_raw(z_r)) + nx.mean(disc.logits_aug(z_a))


def _bce_with_logits(logits: Tensor, target: int) -> Tensor:
    # -log sigmoid(l) for target 1, -log sigmoid(-l) for target 0
    signed = logits if target == 1 else -logits
    return -nx.mean(nx.log_sigmoid(signed))


def discriminator_bce(z_r: Tensor, z_a: Tensor, disc: Discriminator, labels: PseudoLabels) -> Tensor:
    """Binary cross-entropy of both roles against their (possibly swapped) pseudo-labels."""
    raw_target, aug_target = labels.effective()
    return (_bce_with_logits(disc.logits_raw(z_r), raw_target) + _bce_with_logits(disc.logits_aug(z_a), aug_target)) * 0.5


def discriminator_accuracy(z_r: Tensor, z_a: Tensor, disc: Discriminator, labels: PseudoLabels) -> float:
    raw_target, aug_target = labels.effective()
    raw_hits = (disc.logits_raw(z_r.detach()).data > 0).astype(int) == raw_target
    aug_hits = (disc.logits_aug(z_a.detach()).data > 0).astype(int) == aug_target
    return float(np.concatenate([raw_hits, aug_hits]).mean())


def discriminator_step(
    z_r: Tensor,
    z_a: Tensor,
    disc: Discriminator,
    labels: PseudoLabels,
    optimizer: Adam,
) -> Tuple[Discriminator, float]:
    """
    One Adam step on the discriminator BCE.

    Latents are detached first, so no gradient reaches the encoder.
    """
    z_r, z_a = z_r.detach(), z_a.detach()
    optimizer.zero_grad()
    loss = discriminator_bce(z_r, z_a, disc, labels)
    loss.backward()
    optimizer.step()
    return disc, loss.item()


def discriminator_optimizer(disc: Discriminator, lr: float) -> Adam:
    return Adam(disc.named_tensors(), lr=lr)
