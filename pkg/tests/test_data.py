from dataclasses import replace

import numpy as np
import pytest

from leafwet.data import (AugmentPolicy, DatasetConfig, apply_eval_condition, augment, draw_augment,
                          make_sample, synth_dataset, to_arrays)
from leafwet.errors import DomainError
from leafwet.radar import RadarConfig

TINY = DatasetConfig(n=8, radar=RadarConfig(n_freq=8), nx=16, ny=12, n_slices=3)


@pytest.fixture(scope="module")
def tiny():
    return synth_dataset(cfg=TINY)


def test_two_samples_one_per_class():
    ds = synth_dataset(2, TINY)
    assert sorted(s.label for s in ds) == [0, 1]


@pytest.mark.parametrize("n", [0, 1, 3])
def test_bad_sizes(n):
    with pytest.raises(DomainError):
        synth_dataset(n, TINY)


def test_deterministic_per_seed(tiny):
    again = synth_dataset(cfg=TINY)
    assert [s.digest() for s in again] == [s.digest() for s in tiny]
    other = synth_dataset(cfg=TINY, seed=1)
    assert other[0].digest() != tiny[0].digest()


def test_sample_invariants(tiny):
    labels = [s.label for s in tiny]
    assert labels.count(0) == labels.count(1) == 4
    for s in tiny:
        assert s.stack.array.shape[1:] == s.rgb.shape[1:] == (32, 24)
        assert np.all(np.diff(s.stack.depths) > 0)
        assert s.stack.depths[0] == TINY.z_min and s.stack.depths[-1] == pytest.approx(TINY.z_max)
        assert s.rgb.min() >= 0 and s.rgb.max() <= 1
        sar = s.sar
        assert sar.min() >= 0 and sar.max() <= 1
        assert s.raw.compensated


def test_wet_images_carry_droplets():
    cfg = replace(TINY, noise_std=0.0, lighting=(1.0, 1.0))
    wet, dry = make_sample(1, 5, cfg), make_sample(0, 5, cfg)
    # droplets saturate all three channels; leaves and soil never do
    bright = lambda s: int(np.sum(np.all(s.rgb > 0.9, axis=0)))
    assert bright(wet) > 0 and bright(dry) == 0


def test_mean_sar_magnitude_separates_classes():
    ds = synth_dataset()
    score = np.array([s.stack.array.mean() for s in ds])
    y = np.array([s.label for s in ds])
    best = 0.0
    for t in np.unique(score):
        pred = score < t  # wet leaves reflect less
        best = max(best, np.mean(pred == y))
    assert best >= 0.8


def test_null_policy_is_identity(tiny):
    s = tiny[1]
    out = augment(s, AugmentPolicy.null(), 3)
    assert out.rgb.tobytes() == s.rgb.tobytes()
    assert out.raw.data.tobytes() == s.raw.data.tobytes()
    assert out.stack.array.tobytes() == s.stack.array.tobytes()
    assert out.label == s.label


def test_neutral_policy_is_identity(tiny):
    s = tiny[0]
    out = augment(s, AugmentPolicy(rgb_drop=0.0, lighting=(1.0, 1.0), wind_max_mm=0.0), 11)
    assert out.rgb.tobytes() == s.rgb.tobytes() and out.stack.array.tobytes() == s.stack.array.tobytes()


def test_augment_statistics():
    pol = AugmentPolicy()
    draws = [draw_augment(pol, s) for s in range(10_000)]
    drop = np.mean([d[0] for d in draws])
    light = np.mean([d[1] for d in draws])
    winds = np.array([d[2] for d in draws])
    assert abs(drop - 0.2) <= 0.005
    assert light == pytest.approx(0.8, abs=0.01)
    assert np.all(winds <= 2.0)
    assert np.mean(winds > 0) == pytest.approx(pol.wind_prob, abs=0.015)


def test_augment_effects(tiny):
    s = tiny[1]
    pol = AugmentPolicy(rgb_drop=1.0, lighting=None, wind_max_mm=2.0, wind_prob=1.0)
    out = augment(s, pol, 0)
    assert not out.rgb.any() and out.meta["rgb_dropped"]
    assert 0 < out.meta["wind"] <= 2.0
    assert np.allclose(np.abs(out.raw.data), np.abs(s.raw.data))
    assert not np.allclose(out.stack.array, s.stack.array)
    assert np.array_equal(augment(s, pol, 0).stack.array, out.stack.array)


@pytest.mark.parametrize("kw", [dict(rgb_drop=1.5), dict(lighting=(1.2, 0.4)), dict(wind_max_mm=-1.0),
                                dict(wind_prob=2.0)])
def test_policy_validation(kw):
    with pytest.raises(DomainError):
        AugmentPolicy(**kw)


def test_eval_conditions(tiny):
    same = apply_eval_condition(tiny)
    assert all(a.stack.array.tobytes() == b.stack.array.tobytes() for a, b in zip(same, tiny))
    dark = apply_eval_condition(tiny, rgb_blackout=True)
    assert all(not s.rgb.any() for s in dark)
    windy = apply_eval_condition(tiny, wind_mm=2.0, seed=4)
    assert all(s.meta["wind"] == 2.0 for s in windy)
    assert not np.allclose(windy[0].stack.array, tiny[0].stack.array)


def test_to_arrays(tiny):
    sar, rgb, y = to_arrays(tiny)
    assert sar.shape == (8, 3, 32, 24) and rgb.shape == (8, 3, 32, 24)
    assert y.tolist() == [0, 1] * 4
