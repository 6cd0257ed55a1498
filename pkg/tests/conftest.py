"""Shared fixtures for the wavae test suite."""

import numpy as np
import pytest

from wavae import config_loader
from wavae import numerics as nx
from wavae.data import SeriesFrame, SynthSpec, synth
from wavae.numerics import Rng
from wavae.train import TrainConfig
from wavae.vae import ModelParams


@pytest.fixture(autouse=True)
def fresh_config():
    """Every test starts from the repository settings.yaml."""
    config_loader.reset_config()
    yield
    config_loader.reset_config()


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def small_series() -> SeriesFrame:
    return synth(SynthSpec(length=400, channels=2, contamination=0.02, seed=3))


@pytest.fixture
def tiny_config() -> TrainConfig:
    """A config small enough to train in well under a second per epoch."""
    return TrainConfig(seqlen=8, zdim=3, hidden=6, batch=32, epochs=2, stride=2, eval_stride=4, lr=0.005)


@pytest.fixture
def zero_params():
    """Factory for a model whose weights and biases are all zero."""

    def build(input_dim: int, hidden: int, zdim: int, sigmoid_output: bool = False) -> ModelParams:
        params = ModelParams.init(input_dim, hidden, zdim, sigmoid_output, Rng(0))
        for tensor in params.named_tensors().values():
            tensor.data = np.zeros_like(tensor.data)
        return params

    return build


@pytest.fixture
def random_params():
    """Factory for a small randomly initialised model."""

    def build(input_dim: int = 6, hidden: int = 4, zdim: int = 2, sigmoid_output: bool = False, seed: int = 0) -> ModelParams:
        return ModelParams.init(input_dim, hidden, zdim, sigmoid_output, Rng(seed).spawn("init"))

    return build


@pytest.fixture
def make_latents():
    """Factory for a pair of trainable (b, m) latent tensors."""

    def build(b: int, m: int, seed: int = 0):
        stream = Rng(seed)
        return nx.parameter(stream.normal((b, m)), name="z_r"), nx.parameter(stream.normal((b, m)), name="z_a")

    return build
