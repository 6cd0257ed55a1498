import math

import numpy as np
import pytest

from wavae import numerics as nx
from wavae import objective
from wavae.mutual_info import (
    Discriminator,
    InfoNceConfig,
    PseudoLabels,
    adversarial_mi,
    discriminator_accuracy,
    discriminator_bce,
    discriminator_optimizer,
    discriminator_step,
    info_nce,
    info_nce_bound,
)
from wavae.numerics import Adam, Rng, ShapeError, Tensor
from wavae.objective import MiMode, ObjectiveWeights, two_stage_schedule
from wavae.vae import ModelParams, encode

pytestmark = pytest.mark.unit


def constant_discriminator(zdim: int, logit: float, layers: int = 3, separate: bool = False) -> Discriminator:
    """Every weight zero and the output bias at ``logit``."""
    disc = Discriminator.init(zdim, 4, layers, Rng(0), separate=separate)
    for stack in disc.stacks:
        for weight, bias in stack:
            weight.data = np.zeros_like(weight.data)
            bias.data = np.zeros_like(bias.data)
        stack[-1][1].data = np.array([logit])
    return disc


def snapshot(tensors):
    return {name: t.data.copy() for name, t in tensors.items()}


class TestInfoNce:
    def test_single_sample_is_zero(self):
        z = Tensor([[0.3, -1.2, 4.0]])
        assert info_nce(z, Tensor([[2.0, 0.1, -0.7]]), 0.05).item() == 0.0

    def test_two_orthogonal_pairs(self):
        z = Tensor(np.eye(2))
        assert info_nce(z, Tensor(np.eye(2)), 1.0).item() == pytest.approx(math.log(1.0 + 2.0 / math.e), abs=1e-12)
        assert math.log(1.0 + 2.0 / math.e) == pytest.approx(0.5514, abs=1e-4)

    def test_non_negative_and_finite(self, make_latents):
        for seed in range(30):
            z_r, z_a = make_latents(16, 5, seed)
            loss = info_nce(z_r, z_a, 0.1).item()
            assert math.isfinite(loss) and loss >= 0.0

    def test_joint_row_permutation_invariance(self, make_latents):
        z_r, z_a = make_latents(12, 3, seed=4)
        perm = Rng(5).permutation(12)
        shuffled = info_nce(Tensor(z_r.data[perm]), Tensor(z_a.data[perm]), 0.5).item()
        assert shuffled == pytest.approx(info_nce(z_r, z_a, 0.5).item(), rel=1e-12)

    def test_bound_grows_with_correlation(self):
        def mean_bound(rho: float) -> float:
            values = []
            for seed in range(5):
                stream = Rng(seed).spawn(f"rho-{rho}")
                z_r = stream.normal((128, 4))
                z_a = rho * z_r + math.sqrt(1.0 - rho**2) * stream.normal((128, 4))
                values.append(info_nce_bound(info_nce(Tensor(z_r), Tensor(z_a), 1.0).item(), 128))
            return float(np.mean(values))

        low, mid, high = mean_bound(0.0), mean_bound(0.5), mean_bound(0.9)
        assert low < mid < high

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            info_nce(Tensor(np.zeros((0, 2))), Tensor(np.zeros((0, 2))), 1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            info_nce(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3))), 1.0)

    def test_gradient_matches_finite_differences(self, make_latents):
        z_r, z_a = make_latents(6, 3, seed=2)
        result = nx.gradcheck(lambda: info_nce(z_r, z_a, 0.7), [z_r, z_a])
        assert result.ok, result.failures[:3]

    @pytest.mark.parametrize("tau, weight", [(0.0, 0.1), (-1.0, 0.1), (0.1, -0.5)])
    def test_config_validation(self, tau, weight):
        with pytest.raises(ValueError):
            InfoNceConfig(tau=tau, weight=weight)


class TestAdversarialMi:
    def test_constant_half_is_zero(self, make_latents):
        z_r, z_a = make_latents(8, 3)
        assert adversarial_mi(z_r, z_a, constant_discriminator(3, 0.0)).item() == 0.0

    def test_confident_discriminator(self, make_latents):
        z_r, z_a = make_latents(8, 3)
        disc = constant_discriminator(3, math.log(9.0))
        assert np.allclose(disc.psi(z_r).data, 0.9)
        assert adversarial_mi(z_r, z_a, disc).item() == pytest.approx(2.0 * math.log(9.0))
        assert 2.0 * math.log(9.0) == pytest.approx(4.3944, abs=1e-4)

    def test_antisymmetric_under_complement(self, make_latents):
        z_r, z_a = make_latents(8, 3)
        up = adversarial_mi(z_r, z_a, constant_discriminator(3, math.log(9.0))).item()
        down = adversarial_mi(z_r, z_a, constant_discriminator(3, -math.log(9.0))).item()
        assert down == pytest.approx(-up)

    def test_logits_are_clamped(self, make_latents):
        z_r, z_a = make_latents(4, 2)
        disc = constant_discriminator(2, 1e6)
        assert adversarial_mi(z_r, z_a, disc).item() == 30.0
        assert np.all(disc.psi_a(z_a).data < 1.0)

    def test_separate_stacks_serve_each_role(self, make_latents):
        z_r, z_a = make_latents(4, 2)
        disc = constant_discriminator(2, 0.0, separate=True)
        disc.stacks[1][-1][1].data = np.array([2.0])
        assert disc.separate
        assert np.allclose(disc.logits_raw(z_r).data, 0.0)
        assert np.allclose(disc.logits_aug(z_a).data, 2.0)

    def test_init_requires_two_layers(self):
        with pytest.raises(ValueError, match="at least 2 layers"):
            Discriminator.init(3, 8, 1, Rng(0))

    def test_init_layout(self):
        disc = Discriminator.init(3, 8, 4, Rng(0), separate=True)
        assert (disc.layers, disc.hidden, disc.zdim) == (4, 8, 3)
        assert len(disc.named_tensors()) == 16


class TestPseudoLabels:
    def test_default_assignment(self):
        assert PseudoLabels().effective() == (1, 0)

    def test_swap_inverts_and_round_trips(self):
        swapped = PseudoLabels().swap()
        assert swapped.effective() == (0, 1)
        assert swapped.swap().effective() == (1, 0)

    def test_labels_must_be_binary(self):
        with pytest.raises(ValueError):
            PseudoLabels(raw=2)


class TestDiscriminatorStep:
    def test_learns_separated_clusters(self):
        stream = Rng(31)
        z_r = Tensor(stream.normal((64, 2)) * 0.5 + 3.0)
        z_a = Tensor(stream.normal((64, 2)) * 0.5 - 3.0)
        disc = Discriminator.init(2, 16, 3, Rng(1))
        optimizer = discriminator_optimizer(disc, lr=0.01)
        loss = float("inf")
        for _ in range(400):
            disc, loss = discriminator_step(z_r, z_a, disc, PseudoLabels(), optimizer)
        assert loss < 0.1
        assert discriminator_accuracy(z_r, z_a, disc, PseudoLabels()) >= 0.95

    def test_identical_distributions_stay_at_chance(self):
        accuracies = []
        for seed in range(5):
            stream = Rng(seed).spawn("chance")
            disc = Discriminator.init(2, 16, 3, stream.spawn("init"))
            optimizer = discriminator_optimizer(disc, lr=0.01)
            for _ in range(50):
                z_r, z_a = Tensor(stream.normal((128, 2))), Tensor(stream.normal((128, 2)))
                discriminator_step(z_r, z_a, disc, PseudoLabels(), optimizer)
            held_r, held_a = Tensor(stream.normal((2000, 2))), Tensor(stream.normal((2000, 2)))
            accuracies.append(discriminator_accuracy(held_r, held_a, disc, PseudoLabels()))
        assert abs(np.mean(accuracies) - 0.5) <= 0.05

    def test_swapped_labels_flip_the_target(self, make_latents):
        z_r, z_a = make_latents(8, 2)
        disc = constant_discriminator(2, 4.0)
        plain = discriminator_bce(z_r, z_a, disc, PseudoLabels()).item()
        swapped = discriminator_bce(z_r, z_a, disc, PseudoLabels().swap()).item()
        assert plain == pytest.approx(swapped)
        split = constant_discriminator(2, 4.0, separate=True)
        split.stacks[1][-1][1].data = np.array([-4.0])
        assert discriminator_bce(z_r, z_a, split, PseudoLabels()).item() < 0.05
        assert discriminator_bce(z_r, z_a, split, PseudoLabels().swap()).item() > 3.0

    def test_encoder_untouched(self, random_params):
        params = random_params()
        post_r = encode(params, Rng(1).normal((8, 6)), rng=Rng(2))
        post_a = encode(params, Rng(3).normal((8, 6)), rng=Rng(4))
        disc = Discriminator.init(2, 8, 3, Rng(5))
        before = params.checksum()
        discriminator_step(post_r.z, post_a.z, disc, PseudoLabels(), discriminator_optimizer(disc, 0.01))
        assert params.checksum() == before
        assert all(t.grad is None for t in params.named_tensors().values())


class TestTwoStageSchedule:
    @pytest.fixture
    def setup(self, random_params):
        params = random_params(input_dim=6, hidden=4, zdim=2, seed=1)
        disc = Discriminator.init(2, 5, 3, Rng(2))
        weights = ObjectiveWeights(mi_mode=MiMode.ADVERSARIAL, mi_weight=0.2)
        stream = Rng(3)
        x_raw, x_aug = stream.normal((16, 6)), stream.normal((16, 6))
        return params, disc, weights, x_raw, x_aug

    def run(self, params, disc, weights, x_raw, x_aug, **kwargs):
        optimizer = Adam(params.named_tensors(), lr=0.01)
        disc_optimizer = discriminator_optimizer(disc, 0.01)
        return two_stage_schedule(params, optimizer, x_raw, x_aug, weights, Rng(4), disc, disc_optimizer, **kwargs)

    def test_freeze_contracts(self, setup, mocker):
        params, disc, weights, x_raw, x_aug = setup
        disc_start = snapshot(disc.named_tensors())
        seen = {}
        real_step = objective.discriminator_step

        def stage_two(z_r, z_a, d, labels, optimizer):
            seen["disc"] = snapshot(d.named_tensors())
            seen["params"] = params.checksum()
            seen["labels"] = labels
            return real_step(z_r, z_a, d, labels, optimizer)

        mocker.patch("wavae.objective.discriminator_step", side_effect=stage_two)
        start = params.checksum()
        self.run(params, disc, weights, x_raw, x_aug)

        assert all(np.array_equal(seen["disc"][name], value) for name, value in disc_start.items())
        assert seen["params"] != start
        assert params.checksum() == seen["params"]
        assert seen["labels"].effective() == (0, 1)

    def test_every_tensor_updated_once(self, setup, mocker):
        params, disc, weights, x_raw, x_aug = setup
        spy = mocker.spy(objective, "discriminator_step")
        before = {**snapshot(params.named_tensors()), **snapshot(disc.named_tensors())}
        self.run(params, disc, weights, x_raw, x_aug)
        after = {**snapshot(params.named_tensors()), **snapshot(disc.named_tensors())}
        assert spy.call_count == 1
        assert all(not np.array_equal(before[name], after[name]) for name in before)

    def test_disc_steps_repeat_stage_two(self, setup, mocker):
        params, disc, weights, x_raw, x_aug = setup
        spy = mocker.spy(objective, "discriminator_step")
        self.run(params, disc, weights, x_raw, x_aug, disc_steps=3)
        assert spy.call_count == 3

    def test_breakdown_is_finite(self):
        for seed in range(5):
            params = ModelParams.init(6, 4, 2, False, Rng(seed).spawn("init"))
            disc = Discriminator.init(2, 5, 3, Rng(seed).spawn("disc-init"))
            stream = Rng(seed)
            weights = ObjectiveWeights(mi_mode=MiMode.ADVERSARIAL)
            breakdown = self.run(params, disc, weights, stream.normal((16, 6)), stream.normal((16, 6)))
            assert all(math.isfinite(v) for v in breakdown.to_dict().values())

    def test_requires_adversarial_mode(self, setup):
        params, disc, _, x_raw, x_aug = setup
        with pytest.raises(ValueError, match="adversarial"):
            self.run(params, disc, ObjectiveWeights(), x_raw, x_aug)
