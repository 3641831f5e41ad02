import math

import numpy as np
import pytest

from mantae.datagen import (Dataset, SynthConfig, add_awgn, orthonormal_factor, permute_modes_subset,
                            split_sizes, synth_tucker_batch, train_test_split)
from mantae.errors import ConfigError, DegenerateInputError, RankError, ShapeError
from mantae.tensor import unfold


def small(**kw):
    base = dict(order=3, dim=8, batch=40, seed=1)
    base.update(kw)
    return SynthConfig(**base)


def test_config_defaults():
    cfg = SynthConfig()
    assert cfg.shape == (512, 20, 20) and cfg.core_rank == 5
    assert cfg.factor_noise == 0.05 and cfg.snr_db == 30.0


def test_config_errors():
    with pytest.raises(ConfigError):
        SynthConfig(order=1)
    with pytest.raises(ConfigError):
        SynthConfig(dim=1, core_ratio=0.25)
    with pytest.raises(ConfigError):
        SynthConfig(core_ratio=0)


def test_orthonormal_factor():
    q = orthonormal_factor(20, 5, seed=3)
    np.testing.assert_allclose(q.T @ q, np.eye(5), atol=1e-14)
    np.testing.assert_array_equal(q, orthonormal_factor(20, 5, seed=3))
    with pytest.raises(RankError):
        orthonormal_factor(3, 4, seed=0)


def test_synth_deterministic_and_seed_sensitive():
    a, b = synth_tucker_batch(small()), synth_tucker_batch(small())
    np.testing.assert_array_equal(a.noisy, b.noisy)
    np.testing.assert_array_equal(a.clean, b.clean)
    assert not np.array_equal(a.noisy, synth_tucker_batch(small(seed=2)).noisy)


@pytest.mark.parametrize("order", [3, 4])
def test_clean_has_low_multilinear_rank(order):
    ds = synth_tucker_batch(small(order=order))
    assert ds.noisy.shape == (40,) + (8,) * (order - 1)
    for n in range(1, order):
        assert np.linalg.matrix_rank(unfold(ds.clean, n), tol=1e-9) == 2


def test_per_sample_factors_differ():
    ds = synth_tucker_batch(small(shared_factors=False, factor_noise=0.0, snr_db=math.inf))
    # each sample has rank <= 2 per mode but the batch spans more
    assert np.linalg.matrix_rank(unfold(ds.clean[:1], 1), tol=1e-9) == 2
    assert np.linalg.matrix_rank(unfold(ds.clean, 1), tol=1e-9) > 2


def test_awgn_calibration():
    x = np.ones((200, 50))
    y = add_awgn(x, 10.0, seed=0)
    snr = 10 * np.log10(np.sum(x ** 2) / np.sum((y - x) ** 2))
    assert snr == pytest.approx(10.0, abs=0.1)


def test_awgn_infinite_snr_and_zero_signal():
    x = np.arange(4.0)
    np.testing.assert_array_equal(add_awgn(x, math.inf, seed=0), x)
    with pytest.raises(DegenerateInputError):
        add_awgn(np.zeros(3), 30.0, seed=0)


def test_synth_snr_about_30db():
    ds = synth_tucker_batch(SynthConfig(seed=2))
    snr = 10 * np.log10(np.sum(ds.clean ** 2) / np.sum((ds.noisy - ds.clean) ** 2))
    assert snr == pytest.approx(30.0, abs=0.05)


def test_split_sizes():
    assert split_sizes(512, 0.8) == (410, 102)
    assert split_sizes(10, 0.5) == (5, 5)
    with pytest.raises(ConfigError):
        split_sizes(10, 1.0)
    with pytest.raises(ConfigError):
        split_sizes(1, 0.5)


def test_split_disjoint_and_seeded():
    ds = synth_tucker_batch(small())
    ds.labels = np.arange(40)
    tr, te = train_test_split(ds, 0.8, seed=3)
    assert len(tr) == 32 and len(te) == 8
    assert set(tr.labels).isdisjoint(te.labels)
    assert set(tr.labels) | set(te.labels) == set(range(40))
    tr2, _ = train_test_split(ds, 0.8, seed=3)
    np.testing.assert_array_equal(tr.labels, tr2.labels)
    np.testing.assert_array_equal(tr.clean, ds.clean[tr.labels])


def test_permute_zero_fraction_is_identity():
    ds = synth_tucker_batch(small())
    out = permute_modes_subset(ds, 0.0, seed=0)
    np.testing.assert_array_equal(out.noisy, ds.noisy)
    assert not out.permuted.any()


def test_permute_counts_and_content():
    ds = synth_tucker_batch(small(order=4))
    out = permute_modes_subset(ds, 0.25, seed=5)
    assert out.permuted.sum() == 10
    for b in range(len(ds)):
        if out.permuted[b]:
            assert not np.array_equal(out.noisy[b], ds.noisy[b])
            assert sorted(out.noisy[b].ravel()) == sorted(ds.noisy[b].ravel())
        else:
            np.testing.assert_array_equal(out.noisy[b], ds.noisy[b])


def test_permute_clean_follows_noisy():
    ds = synth_tucker_batch(small())
    out = permute_modes_subset(ds, 0.5, seed=1)
    for b in np.flatnonzero(out.permuted):
        np.testing.assert_array_equal(out.noisy[b], ds.noisy[b].T)
        np.testing.assert_array_equal(out.clean[b], ds.clean[b].T)


def test_permute_errors():
    ds = Dataset(np.ones((4, 3, 2)))
    with pytest.raises(ShapeError):
        permute_modes_subset(ds, 0.5, seed=0)
    with pytest.raises(ConfigError):
        permute_modes_subset(Dataset(np.ones((4, 2, 2))), 1.5, seed=0)


@pytest.mark.parametrize("fraction", [0.1, 0.2, 0.3])
def test_permuted_samples_spread_evenly(fraction):
    ds = permute_modes_subset(synth_tucker_batch(small(batch=100)), fraction, seed=2)
    tr, te = train_test_split(ds, 0.8, seed=4)
    total = ds.permuted.sum()
    assert tr.permuted.sum() + te.permuted.sum() == total
    assert abs(int(tr.permuted.sum()) - int(te.permuted.sum())) <= 1
    assert len(tr) == 80


def test_dataset_shape_checks():
    with pytest.raises(ShapeError):
        Dataset(np.ones((3, 2)), clean=np.ones((3, 3)))
    with pytest.raises(ShapeError):
        Dataset(np.ones((3, 2)), labels=np.arange(2))
