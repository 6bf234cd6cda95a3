import numpy as np
import pytest

from gradcheck import numeric_grad, rel_err
from leafwet.errors import DomainError, NumericError
from leafwet.model import (ModelConfig, ModelParams, fit_input_scale, forward, fuse_batch, gray_world,
                           loss_and_grad, predict, probe_loss_and_grad)


def small_params(modality="fused", ffn=False, seed=1):
    cfg = ModelConfig(conv_channels=(4, 6, 8), n_heads=2, n_layers=1, ffn=ffn, d_ff=6, modality=modality)
    p = ModelParams.init(cfg, seed=seed)
    r = np.random.default_rng(seed + 7)
    for k in p.tensors:
        if k.endswith(("_b", "_g", ".b")):
            p.tensors[k] = np.array(p.tensors[k] + r.normal(0, 0.3, p.tensors[k].shape))
    p.tensors["cls.w"] = r.normal(0, 1, 8)
    return p


def batch(rng, b=3, s=4, h=8, w=8):
    return rng.uniform(0, 1, (b, s, h, w)), rng.uniform(0, 1, (b, 3, h, w)), rng.integers(0, 2, b).astype(float)


def kink_margin(p, sar, rgb):
    """Smallest |pre-activation| in the conv stack; finite differences straddle ReLU kinks below ~eps."""
    from leafwet.model import features
    _, cache = features(p, sar, rgb)
    return min(float(np.min(np.abs(z))) for _, z, _ in cache["conv"])


def check_all(p, fn, sar, rgb, y, tol=1e-4):
    assert kink_margin(p, sar, rgb) > 1e-3
    fn(p, sar, rgb, y)
    got = {k: v.copy() for k, v in p.grads.items()}
    worst = {}
    for k, v in p.tensors.items():
        num = numeric_grad(lambda: fn(p, sar, rgb, y)[0], v)
        if k.endswith(".bk"):
            # key bias cancels inside the softmax: both sides must be zero up to rounding
            assert np.max(np.abs(got[k])) < 1e-12 and np.max(np.abs(num)) < 1e-9
            continue
        worst[k] = rel_err(got[k], num)
    assert max(worst.values()) < tol, worst
    return got


# input seeds chosen so no ReLU pre-activation lies within finite-difference reach of its kink
@pytest.mark.parametrize("modality,seed", [("fused", 6), ("sar", 6), ("rgb", 2)])
def test_full_model_gradients(modality, seed):
    p = small_params(modality)
    sar, rgb, y = batch(np.random.default_rng(seed))
    fit_input_scale(p, sar, rgb)
    check_all(p, loss_and_grad, sar, rgb, y)


def test_full_model_gradients_with_ffn():
    p = small_params(ffn=True)
    sar, rgb, y = batch(np.random.default_rng(6))
    fit_input_scale(p, sar, rgb)
    check_all(p, loss_and_grad, sar, rgb, y)


def test_probe_gradients():
    p = small_params()
    sar, rgb, y = batch(np.random.default_rng(0), b=2, s=3)
    fit_input_scale(p, sar, rgb)
    r = np.random.default_rng(0)
    p.tensors["probe.w"], p.tensors["probe.b"] = r.normal(0, 0.5, 8), np.array(0.1)
    p.zero_grad()
    check_all(p, probe_loss_and_grad, sar, rgb, y)


def test_alpha_gradient_nonzero(rng):
    p = small_params()
    sar, rgb, y = batch(rng)
    loss_and_grad(p, sar, rgb, y)
    g = p.grads["alpha"]
    num = numeric_grad(lambda: loss_and_grad(p, sar, rgb, y)[0], p.tensors["alpha"])
    assert abs(g) > 1e-6 and g == pytest.approx(num, rel=1e-5)


def test_classifier_gradient_vanishes_at_stationary_point(rng):
    p = small_params()
    p.tensors["cls.w"] = np.zeros(8)
    p.tensors["cls.b"] = np.array(0.0)
    sar, rgb, _ = batch(rng)
    loss, prob = loss_and_grad(p, sar, rgb, np.full(3, 0.5))
    assert np.all(prob == 0.5)
    assert not p.grads["cls.w"].any() and p.grads["cls.b"] == 0.0


def test_predict_batches_consistently(rng):
    p = small_params()
    sar, rgb, _ = batch(rng, b=7)
    whole = forward(p, sar, rgb)[0]
    assert np.allclose(predict(p, sar, rgb, batch_size=3), whole, rtol=0, atol=1e-15)
    assert predict(p, sar[:0], rgb[:0]).size == 0


def test_modalities_ignore_the_other_input(rng):
    sar, rgb, _ = batch(rng)
    p = small_params("sar")
    assert np.array_equal(predict(p, sar, rgb), predict(p, sar, rng.uniform(0, 1, rgb.shape)))
    p = small_params("rgb")
    assert np.array_equal(predict(p, sar, rgb), predict(p, rng.uniform(0, 1, sar.shape), rgb))


def test_gray_world(rng):
    img = rng.uniform(0, 1, (2, 3, 5, 5))
    g = gray_world(img)
    assert np.allclose(g.mean(axis=(1, 2, 3)), 1.0)
    assert np.allclose(gray_world(0.4 * img), g)
    assert not gray_world(np.zeros((3, 4, 4))).any()


def test_fuse_batch_layout(rng):
    p = small_params()
    sar, rgb, _ = batch(rng, b=2, s=3)
    x, _ = fuse_batch(p, sar, rgb)
    assert x.shape == (6, 8, 8, 4)
    gw = gray_world(rgb)
    assert np.allclose(x[4, ..., 1], sar[1, 1] * gw[1, 1] * p.buffers["input_scale"][1])
    assert np.allclose(x[4, ..., 3], p["alpha"] * sar[1, 1] * p.buffers["input_scale"][3])


def test_input_scale_unit_rms(rng):
    p = small_params()
    sar, rgb, _ = batch(rng, b=4)
    fit_input_scale(p, sar, rgb)
    x, _ = fuse_batch(ModelParams(p.config, {"alpha": np.array(1.0)}, buffers=p.buffers), sar, rgb)
    assert np.allclose(np.sqrt(np.mean(x * x, axis=(0, 1, 2))), 1.0)


def test_nonfinite_params_raise(rng):
    p = small_params()
    p.tensors["enc0.wq"][0, 0] = np.inf
    with pytest.raises(NumericError):
        predict(p, *batch(rng)[:2])


def test_model_config_validation():
    with pytest.raises(DomainError):
        ModelConfig(modality="lidar")
    with pytest.raises(DomainError):
        ModelConfig(conv_channels=())
    with pytest.raises(DomainError):
        ModelConfig(conv_channels=(4, 9), n_heads=2)


def test_init_is_seeded():
    a, b = ModelParams.init(ModelConfig(), seed=3), ModelParams.init(ModelConfig(), seed=3)
    assert all(np.array_equal(a[k], b[k]) for k in a.tensors)
    assert set(a.grads) == set(a.tensors)
    assert all(a.grads[k].shape == v.shape for k, v in a.tensors.items())
