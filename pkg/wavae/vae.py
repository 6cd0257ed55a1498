"""
Shared-parameter variational autoencoder over flattened windows.

One ``ModelParams`` instance serves both the raw and the augmented stream.
The encoder is a tanh trunk with separate mean and log-variance heads; the
decoder mirrors it with a linear or sigmoid output depending on the
likelihood.
"""

import hashlib
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np

from . import numerics as nx
from .numerics import Rng, ShapeError, Tensor

logger = logging.getLogger(__name__)

LOGVAR_BOUND = 10.0
PROB_FLOOR = 1e-7


class ReconstructionRangeError(ValueError):
    """A Bernoulli-type likelihood was given values outside [0, 1]."""


class ReconKind(str, Enum):
    MSE = "mse"
    BCE = "bce"
    ROBUST1 = "robust1"
    ROBUST2 = "robust2"


@dataclass(frozen=True)
class ReconLossKind:
    """Likelihood family for the reconstruction term and its hyperparameters."""

    kind: ReconKind = ReconKind.MSE
    alpha1: float = 0.1
    alpha2: float = 0.1
    sigma_lik: float = 1.0

    def __post_init__(self):
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise ValueError(f"alpha1 and alpha2 must be positive, got {self.alpha1}, {self.alpha2}")
        if self.sigma_lik <= 0:
            raise ValueError(f"sigma_lik must be positive, got {self.sigma_lik}")

    @property
    def sigmoid_output(self) -> bool:
        return self.kind in (ReconKind.BCE, ReconKind.ROBUST1)


@dataclass
class ModelParams:
    """Encoder (phi) and decoder (theta) weights, in checkpoint order."""

    enc_w: Tensor
    enc_b: Tensor
    mu_w: Tensor
    mu_b: Tensor
    logvar_w: Tensor
    logvar_b: Tensor
    dec_w: Tensor
    dec_b: Tensor
    out_w: Tensor
    out_b: Tensor
    sigmoid_output: bool = False

    ORDER = ("enc_w", "enc_b", "mu_w", "mu_b", "logvar_w", "logvar_b", "dec_w", "dec_b", "out_w", "out_b")

    @classmethod
    def init(cls, input_dim: int, hidden: int, zdim: int, sigmoid_output: bool, rng: Rng) -> "ModelParams":
        """Glorot-uniform weights, zero biases."""
        shapes = {
            "enc_w": (input_dim, hidden),
            "mu_w": (hidden, zdim),
            "logvar_w": (hidden, zdim),
            "dec_w": (zdim, hidden),
            "out_w": (hidden, input_dim),
        }
        tensors = {}
        for name in cls.ORDER:
            if name in shapes:
                fan_in, fan_out = shapes[name]
                bound = math.sqrt(6.0 / (fan_in + fan_out))
                tensors[name] = nx.parameter(rng.uniform(-bound, bound, shapes[name]), name=name)
            else:
                width = shapes[name.replace("_b", "_w")][1]
                tensors[name] = nx.parameter(np.zeros(width), name=name)
        return cls(**tensors, sigmoid_output=sigmoid_output)

    def named_tensors(self) -> Dict[str, Tensor]:
        return {name: getattr(self, name) for name in self.ORDER}

    @property
    def input_dim(self) -> int:
        return self.enc_w.shape[0]

    @property
    def hidden(self) -> int:
        return self.enc_w.shape[1]

    @property
    def zdim(self) -> int:
        return self.mu_w.shape[1]

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for tensor in self.named_tensors().values():
            digest.update(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
        return digest.hexdigest()

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self.named_tensors().values())


@dataclass
class LatentGaussian:
    """Diagonal posterior q(z|x) and one reparameterized draw."""

    mu: Tensor
    logvar: Tensor
    z: Tensor
    eps: np.ndarray


@dataclass
class LossBreakdown:
    """Additive terms of one batch objective, in minimization form."""

    recon_raw: float
    kl_raw: float
    recon_aug: float
    kl_aug: float
    mi_term: float
    total: float
    disc_loss: Optional[float] = None
    disc_accuracy: Optional[float] = None
    mi_bound: Optional[float] = None

    def to_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)


def _as_input(x: Union[Tensor, np.ndarray]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def encode(
    params: ModelParams,
    x: Union[Tensor, np.ndarray],
    rng: Optional[Rng] = None,
    eps: Optional[np.ndarray] = None,
) -> LatentGaussian:
    """
    Posterior parameters and z = mu + exp(logvar / 2) * eps.

    ``eps`` is drawn from ``rng`` unless given; with neither, z is the mean.
    """
    x = _as_input(x)
    if x.data.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(f"encode: input shape {x.shape} does not match model input dim {params.input_dim}")
    hidden = nx.tanh(x @ params.enc_w + params.enc_b)
    mu = hidden @ params.mu_w + params.mu_b
    logvar = nx.clip(hidden @ params.logvar_w + params.logvar_b, -LOGVAR_BOUND, LOGVAR_BOUND)
    if eps is None:
        eps = rng.normal(mu.shape) if rng is not None else np.zeros(mu.shape)
    elif eps.shape != mu.shape:
        raise ShapeError(f"encode: noise shape {eps.shape} does not match latent shape {mu.shape}")
    z = mu + nx.exp(logvar * 0.5) * Tensor(eps)
    return LatentGaussian(mu=mu, logvar=logvar, z=z, eps=eps)


def decode(params: ModelParams, z: Union[Tensor, np.ndarray]) -> Tensor:
    z = _as_input(z)
    if z.data.ndim != 2 or z.shape[1] != params.zdim:
        raise ShapeError(f"decode: latent shape {z.shape} does not match model latent dim {params.zdim}")
    hidden = nx.tanh(z @ params.dec_w + params.dec_b)
    out = hidden @ params.out_w + params.out_b
    return nx.sigmoid(out) if params.sigmoid_output else out


def kl_divergence(post: LatentGaussian) -> Tensor:
    """Batch mean of KL(q(z|x) || N(0, I)) in closed form."""
    per_dim = nx.square(post.mu) + nx.exp(post.logvar) - 1.0 - post.logvar
    return nx.mean(nx.reduce_sum(per_dim, axis=1)) * 0.5


def _check_unit_interval(name: str, values: np.ndarray, kind: ReconKind) -> None:
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise ReconstructionRangeError(
            f"{kind.value} likelihood needs {name} in [0, 1], got range [{values.min():.4g}, {values.max():.4g}]"
        )


def recon_loss(kind: ReconLossKind, x: Union[Tensor, np.ndarray], x_hat: Tensor) -> Tensor:
    """
    Reconstruction log-likelihood surrogate, averaged over the batch.

    Larger is a better fit for every kind; MSE is reported negated.
    """
    x = _as_input(x)
    if x.shape != x_hat.shape:
        raise ShapeError(f"recon_loss: target shape {x.shape} does not match reconstruction shape {x_hat.shape}")
    dim = x.shape[1]

    if kind.kind is ReconKind.MSE:
        per_window = nx.mean(nx.square(x_hat - x), axis=1)
        return -nx.mean(per_window)

    if kind.kind is ReconKind.ROBUST2:
        alpha, var = kind.alpha2, kind.sigma_lik**2
        sse = nx.reduce_sum(nx.square(x_hat - x), axis=1)
        log_density = sse * (-alpha / (2.0 * var)) - alpha * dim / 2.0 * math.log(2.0 * math.pi * var)
        return nx.mean(nx.exp(log_density) - 1.0) * ((alpha + 1.0) / alpha)

    _check_unit_interval("reconstruction", x_hat.data, kind.kind)
    _check_unit_interval("target", x.data, kind.kind)
    p = nx.clip(x_hat, PROB_FLOOR, 1.0 - PROB_FLOOR)
    one_minus_x = 1.0 - x

    if kind.kind is ReconKind.BCE:
        per_elem = x * nx.log(p) + one_minus_x * nx.log(1.0 - p)
        return nx.mean(nx.reduce_sum(per_elem, axis=1))

    alpha = kind.alpha1
    per_elem = x * nx.power(p, alpha) + one_minus_x * nx.power(1.0 - p, alpha)
    product = nx.exp(nx.reduce_sum(nx.log(per_elem), axis=1))
    return nx.mean(product - 1.0) * ((alpha + 1.0) / alpha)


def elbo_terms(
    params: ModelParams,
    x: Union[Tensor, np.ndarray],
    beta: float,
    kind: ReconLossKind,
    rng: Optional[Rng] = None,
    eps: Optional[np.ndarray] = None,
) -> Tuple[Tensor, Tensor, Tensor, LatentGaussian, Tensor]:
    """(elbo, recon, kl, posterior, reconstruction) for one stream."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    post = encode(params, x, rng=rng, eps=eps)
    x_hat = decode(params, post.z)
    recon = recon_loss(kind, x, x_hat)
    kl = kl_divergence(post)
    return recon - kl * beta, recon, kl, post, x_hat


def elbo(
    params: ModelParams,
    x: Union[Tensor, np.ndarray],
    beta: float,
    kind: ReconLossKind,
    rng: Optional[Rng] = None,
    eps: Optional[np.ndarray] = None,
) -> Tuple[Tensor, LatentGaussian, Tensor]:
    """recon_loss - beta * KL for one stream; returns (value, posterior, reconstruction)."""
    value, _, _, post, x_hat = elbo_terms(params, x, beta, kind, rng=rng, eps=eps)
    return value, post, x_hat


def reconstruct_mean(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Deterministic reconstruction through the posterior mean."""
    post = encode(params, x)
    return decode(params, post.mu.detach()).data
