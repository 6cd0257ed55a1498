"""
Batch objectives for joint raw/augmented training.

Both streams go through the same ``ModelParams``. The minimized quantity is

    total = -(ELBO_raw + ELBO_aug) - mi_weight * mi_term

where ``mi_term`` is -infoNCE for the contrastive coupler, the discriminator
logit sum for the adversarial coupler and 0 without a coupler.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .mutual_info import (
    Discriminator,
    InfoNceConfig,
    PseudoLabels,
    adversarial_mi,
    discriminator_accuracy,
    discriminator_step,
    info_nce,
    info_nce_bound,
)
from .numerics import Adam, Rng, Tensor
from .vae import LatentGaussian, LossBreakdown, ModelParams, ReconLossKind, elbo_terms

logger = logging.getLogger(__name__)


class TrainingDivergedError(ArithmeticError):
    """A loss term or a weight became NaN or infinite."""


class MiMode(str, Enum):
    CONTRAST = "contrast"
    ADVERSARIAL = "adversarial"
    NONE = "none"


@dataclass(frozen=True)
class ObjectiveWeights:
    """Everything the batch objective needs besides data and parameters."""

    beta: float = 0.001
    recon: ReconLossKind = ReconLossKind()
    mi_mode: MiMode = MiMode.CONTRAST
    tau: float = 0.1
    mi_weight: float = 0.1

    def __post_init__(self):
        InfoNceConfig(self.tau, self.mi_weight)

    @property
    def coupler(self) -> InfoNceConfig:
        """Critic temperature and MI weight, validated."""
        return InfoNceConfig(self.tau, self.mi_weight)


def _checked(name: str, value: Tensor) -> float:
    number = value.item()
    if not math.isfinite(number):
        raise TrainingDivergedError(f"Non-finite {name} term: {number}")
    return number


def batch_objective(
    params: ModelParams,
    x_raw: np.ndarray,
    x_aug: np.ndarray,
    weights: ObjectiveWeights,
    rng: Rng,
    disc: Optional[Discriminator] = None,
) -> Tuple[Tensor, LossBreakdown, LatentGaussian, LatentGaussian]:
    """
    Build the minimization objective for one batch of paired windows.

    Noise for the raw stream is drawn before the augmented stream. A zero MI
    weight keeps the coupler out of the graph; its value is still reported.
    """
    elbo_raw, recon_raw, kl_raw, post_raw, _ = elbo_terms(params, x_raw, weights.beta, weights.recon, rng=rng)
    elbo_aug, recon_aug, kl_aug, post_aug, _ = elbo_terms(params, x_aug, weights.beta, weights.recon, rng=rng)
    total = -(elbo_raw + elbo_aug)

    mi_value, mi_bound = 0.0, None
    coupler = weights.coupler
    if weights.mi_mode is not MiMode.NONE:
        coupled = coupler.weight > 0
        z_r = post_raw.z if coupled else post_raw.z.detach()
        z_a = post_aug.z if coupled else post_aug.z.detach()
        if weights.mi_mode is MiMode.CONTRAST:
            mi = -info_nce(z_r, z_a, coupler.tau)
        else:
            if disc is None:
                raise ValueError("Adversarial objective needs a discriminator")
            mi = adversarial_mi(z_r, z_a, disc)
        mi_value = _checked("mi", mi)
        if weights.mi_mode is MiMode.CONTRAST:
            mi_bound = info_nce_bound(-mi_value, x_raw.shape[0])
        if coupled:
            total = total - mi * coupler.weight

    breakdown = LossBreakdown(
        recon_raw=_checked("recon_raw", recon_raw),
        kl_raw=_checked("kl_raw", kl_raw),
        recon_aug=_checked("recon_aug", recon_aug),
        kl_aug=_checked("kl_aug", kl_aug),
        mi_term=mi_value,
        total=_checked("total", total),
        mi_bound=mi_bound,
    )
    return total, breakdown, post_raw, post_aug


def generator_step(
    params: ModelParams,
    optimizer: Adam,
    x_raw: np.ndarray,
    x_aug: np.ndarray,
    weights: ObjectiveWeights,
    rng: Rng,
    disc: Optional[Discriminator] = None,
) -> Tuple[LossBreakdown, LatentGaussian, LatentGaussian]:
    """One Adam step on the shared encoder/decoder; the discriminator is left untouched."""
    optimizer.zero_grad()
    total, breakdown, post_raw, post_aug = batch_objective(params, x_raw, x_aug, weights, rng, disc)
    total.backward()
    optimizer.step()
    if disc is not None:
        for tensor in disc.named_tensors().values():
            tensor.zero_grad()
    if not params.all_finite():
        raise TrainingDivergedError("Encoder/decoder weights became non-finite after an update")
    return breakdown, post_raw, post_aug


def two_stage_schedule(
    params: ModelParams,
    optimizer: Adam,
    x_raw: np.ndarray,
    x_aug: np.ndarray,
    weights: ObjectiveWeights,
    rng: Rng,
    disc: Discriminator,
    disc_optimizer: Adam,
    labels: PseudoLabels = PseudoLabels(),
    disc_steps: int = 1,
) -> LossBreakdown:
    """
    Adversarial update for one batch.

    Stage one freezes the discriminator and steps the encoder/decoder on the
    full objective. Stage two freezes the encoder/decoder and steps the
    discriminator on the stage-one latents against swapped pseudo-labels.
    """
    if weights.mi_mode is not MiMode.ADVERSARIAL:
        raise ValueError(f"two_stage_schedule runs in adversarial mode, got {weights.mi_mode.value}")
    breakdown, post_raw, post_aug = generator_step(params, optimizer, x_raw, x_aug, weights, rng, disc)

    stage_two_labels = labels.swap()
    disc_loss = float("nan")
    for _ in range(disc_steps):
        disc, disc_loss = discriminator_step(post_raw.z, post_aug.z, disc, stage_two_labels, disc_optimizer)
    if not math.isfinite(disc_loss):
        raise TrainingDivergedError(f"Non-finite discriminator loss: {disc_loss}")
    breakdown.disc_loss = disc_loss
    breakdown.disc_accuracy = discriminator_accuracy(post_raw.z, post_aug.z, disc, stage_two_labels)
    return breakdown
