import numpy as np
import pytest

from wavae.augment import (
    IDENTITY,
    MINMAX,
    STANDARDIZE,
    AugmentKind,
    AugmentKindName,
    make_pair,
    minmax,
    parse_aug_code,
    standardize,
)
from wavae.data import WindowBatch
from wavae.numerics import Rng

pytestmark = pytest.mark.unit


def column(*values):
    return np.array(values, dtype=np.float64)[:, None]


@pytest.fixture
def batch():
    stream = Rng(21)
    windows = 3.0 * stream.normal((10, 12, 3)) + 4.0
    return WindowBatch(windows, np.array([0, 1] * 5), np.arange(10) * 2)


class TestStandardize:
    def test_population_sigma(self):
        out = standardize(column(1, 2, 3))
        assert np.allclose(out[:, 0], [-1.2247448713915890, 0.0, 1.2247448713915890], atol=1e-12)

    def test_constant_channel_gives_zeros(self):
        assert np.array_equal(standardize(column(5, 5, 5)), np.zeros((3, 1)))

    def test_idempotent(self):
        x = Rng(1).normal((50, 4))
        once = standardize(x)
        twice = standardize(once)
        assert np.allclose(once, twice, atol=1e-12)
        assert np.all(np.abs(twice.mean(axis=0)) <= 1e-10)
        assert np.all(np.abs(twice.var(axis=0) - 1.0) <= 1e-10)

    def test_window_of_length_one(self):
        assert np.array_equal(standardize(column(3.5)), np.zeros((1, 1)))

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            standardize(np.zeros((0, 2)))


class TestMinmax:
    def test_example(self):
        assert np.allclose(minmax(column(2, 4, 6))[:, 0], [0.0, 0.5, 1.0])

    def test_constant_channel_gives_zeros(self):
        assert np.array_equal(minmax(column(7, 7)), np.zeros((2, 1)))

    def test_invariant_to_positive_affine_maps(self):
        stream = Rng(8)
        for _ in range(20):
            x = stream.normal((30, 2))
            slope, shift = stream.uniform(0.1, 10.0, 1)[0], stream.uniform(-5.0, 5.0, 1)[0]
            assert np.allclose(minmax(slope * x + shift), minmax(x), atol=1e-12)

    def test_bounded(self):
        out = minmax(Rng(4).normal((40, 3)) * 100.0)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestAugmentKind:
    def test_eps_norm_must_be_positive(self):
        with pytest.raises(ValueError, match="eps_norm"):
            AugmentKind(AugmentKindName.MINMAX, eps_norm=0.0)

    def test_eps_norm_guards_tiny_ranges(self):
        kind = AugmentKind(AugmentKindName.MINMAX, eps_norm=1.0)
        assert np.allclose(kind.apply(column(0.0, 0.5)), column(0.0, 0.5))

    def test_identity_copies(self):
        x = column(1, 2)
        out = IDENTITY.apply(x)
        out[0, 0] = 99.0
        assert x[0, 0] == 1.0

    @pytest.mark.parametrize(
        "code, expected",
        [
            ("mm", (AugmentKindName.MINMAX, AugmentKindName.MINMAX)),
            ("ms", (AugmentKindName.MINMAX, AugmentKindName.STANDARDIZE)),
            ("SM", (AugmentKindName.STANDARDIZE, AugmentKindName.MINMAX)),
            ("ss", (AugmentKindName.STANDARDIZE, AugmentKindName.STANDARDIZE)),
            ("none", (AugmentKindName.IDENTITY, AugmentKindName.IDENTITY)),
        ],
    )
    def test_parse_aug_code(self, code, expected):
        raw, aug = parse_aug_code(code)
        assert (raw.name, aug.name) == expected

    def test_parse_aug_code_carries_eps(self):
        raw, aug = parse_aug_code("ms", eps_norm=1e-3)
        assert raw.eps_norm == aug.eps_norm == 1e-3

    def test_unknown_code(self):
        with pytest.raises(ValueError, match="Unknown augmentation code"):
            parse_aug_code("mx")


class TestMakePair:
    def test_minmax_both_streams_bounded(self, batch):
        raw, aug = make_pair(batch, MINMAX, MINMAX)
        for stream in (raw, aug):
            assert stream.windows.min() >= 0.0 and stream.windows.max() <= 1.0

    def test_identity_streams_match(self, batch):
        raw, aug = make_pair(batch, IDENTITY, IDENTITY)
        assert np.array_equal(raw.windows, aug.windows)
        assert np.array_equal(raw.windows, batch.windows)

    def test_standardize_then_minmax(self, batch):
        raw, aug = make_pair(batch, STANDARDIZE, MINMAX)
        assert np.all(np.abs(raw.windows.mean(axis=1)) <= 1e-10)
        assert np.all(np.abs(raw.windows.var(axis=1) - 1.0) <= 1e-10)
        assert aug.windows.min() >= 0.0 and aug.windows.max() <= 1.0

    def test_shape_labels_and_offsets_unchanged(self, batch):
        raw, aug = make_pair(batch, STANDARDIZE, MINMAX)
        for stream in (raw, aug):
            assert stream.windows.shape == batch.windows.shape
            assert np.array_equal(stream.labels, batch.labels)
            assert np.array_equal(stream.offsets, batch.offsets)

    def test_statistics_are_per_window(self, batch):
        raw, _ = make_pair(batch, MINMAX, MINMAX)
        assert np.allclose(raw.windows.min(axis=1), 0.0)
        assert np.allclose(raw.windows.max(axis=1), 1.0)

    def test_input_not_modified(self, batch):
        before = batch.windows.copy()
        make_pair(batch, STANDARDIZE, MINMAX)
        assert np.array_equal(batch.windows, before)
