import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradcheck import numeric_grad, rel_err
from leafwet import encoder as enc
from leafwet.encoder import AttentionConfig, bce_loss, layer_norm_forward, positional_encoding, softmax, squash
from leafwet.errors import DomainError
from leafwet.model import ModelConfig, ModelParams, encoder_classify, multi_head_attention


def enc_params(d=8, heads=2, layers=1, ffn=False, seed=0):
    cfg = ModelConfig(conv_channels=(4, d), n_heads=heads, n_layers=layers, ffn=ffn, d_ff=6)
    p = ModelParams.init(cfg, seed=seed)
    r = np.random.default_rng(seed + 100)
    for k in p.tensors:
        if k.startswith("enc") and (k.endswith("_b") or k.endswith("_g") or ".b" in k):
            p.tensors[k] = p.tensors[k] + r.normal(0, 0.2, p.tensors[k].shape)
    return p


# --- positional encoding -------------------------------------------------------

def test_pe_at_zero():
    pe = positional_encoding(0, 9)
    assert np.all(pe[0::2] == 0.0) and np.all(pe[1::2] == 1.0)


@given(depth=st.integers(0, 9999), d=st.integers(2, 64))
def test_pe_pairs_on_unit_circle(depth, d):
    pe = positional_encoding(depth, d)
    m = d // 2 * 2
    assert np.allclose(pe[0:m:2] ** 2 + pe[1:m:2] ** 2, 1.0, atol=1e-12)


def test_pe_extended_precision_value():
    mpmath.mp.dps = 40
    want = float(mpmath.sin(mpmath.mpf(3) / mpmath.power(10000, 1)))
    assert positional_encoding(3, 4)[2] == pytest.approx(want, abs=1e-15)


@settings(max_examples=50)
@given(a=st.integers(0, 9999), b=st.integers(0, 9999), d=st.integers(2, 32))
def test_pe_distinct_depths(a, b, d):
    if a != b:
        assert np.max(np.abs(positional_encoding(a, d) - positional_encoding(b, d))) > 1e-9


def test_pe_rejects_zero_dim():
    with pytest.raises(DomainError):
        positional_encoding(1, 0)


# --- attention ------------------------------------------------------------------

def naive_block(x, p, pre, cfg):
    s, d = x.shape
    h, dh = cfg.n_heads, d // cfg.n_heads
    q, k, v = (x @ p[f"{pre}.w{n}"] + p[f"{pre}.b{n}"] for n in "qkv")
    heads, weights = [], []
    for hi in range(h):
        sl = slice(hi * dh, (hi + 1) * dh)
        a = np.zeros((s, s))
        for i in range(s):
            sc = [sum(q[i, sl][t] * k[j, sl][t] for t in range(dh)) / np.sqrt(dh) for j in range(s)]
            e = [np.exp(c - max(sc)) for c in sc]
            a[i] = [ej / sum(e) for ej in e]
        weights.append(a)
        heads.append(a @ v[:, sl])
    z = x + np.concatenate(heads, axis=1) @ p[f"{pre}.wo"] + p[f"{pre}.bo"]
    mu = z.mean(axis=1, keepdims=True)
    var = ((z - mu) ** 2).mean(axis=1, keepdims=True)
    return (z - mu) / np.sqrt(var + cfg.ln_eps) * p[f"{pre}.ln1_g"] + p[f"{pre}.ln1_b"], np.array(weights)


def test_attention_matches_naive_loop(rng):
    p = enc_params()
    x = rng.normal(size=(4, 8))
    y, w = multi_head_attention(x, p)
    want_y, want_w = naive_block(x, p.tensors, "enc0", p.config.attention)
    assert np.allclose(w, want_w, atol=1e-12) and np.allclose(y, want_y, atol=1e-10)
    assert np.max(np.abs(w.sum(axis=-1) - 1.0)) <= 1e-12


def test_singleton_attention(rng):
    p = enc_params()
    x = rng.normal(size=(1, 8))
    y, w = multi_head_attention(x, p)
    assert np.all(w == 1.0)
    t = p.tensors
    z = x + (x @ t["enc0.wv"] + t["enc0.bv"]) @ t["enc0.wo"] + t["enc0.bo"]
    want, _ = layer_norm_forward(z, t["enc0.ln1_g"], t["enc0.ln1_b"], 1e-12)
    assert np.allclose(y, want, atol=1e-12)


def test_identical_tokens_identical_outputs(rng):
    p = enc_params()
    tok = rng.normal(size=8)
    y, _ = multi_head_attention(np.stack([tok, tok]), p)
    assert np.array_equal(y[0], y[1])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.integers(1, 12), big=st.sampled_from([1.0, 1e3]))
def test_softmax_rows_sum_to_one(seed, s, big):
    p = enc_params(seed=seed % 1000)
    x = np.random.default_rng(seed).normal(size=(s, 8)) * big
    _, w = multi_head_attention(x, p)
    assert np.all(np.isfinite(w)) and np.max(np.abs(w.sum(axis=-1) - 1.0)) <= 1e-12


def test_softmax_overflow_safe():
    a = softmax(np.array([[1e300, 0.0, -1e300]]))
    assert np.array_equal(a, [[1.0, 0.0, 0.0]])


@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
def test_layer_norm_standardizes(seed, scale):
    x = np.random.default_rng(seed).normal(size=(5, 8)) * scale + 3.0
    y, _ = layer_norm_forward(x, np.ones(8), np.zeros(8), 1e-12)
    assert np.allclose(y.mean(axis=-1), 0, atol=1e-9) and np.allclose(y.var(axis=-1), 1, atol=1e-9)


def test_attention_config_validation():
    with pytest.raises(DomainError):
        AttentionConfig(d_model=8, n_heads=3)
    with pytest.raises(DomainError):
        AttentionConfig(d_model=8, n_heads=0)


# --- classifier and loss ----------------------------------------------------------

def test_zero_params_give_half(rng):
    p = enc_params()
    for k in p.tensors:
        p.tensors[k] = np.zeros_like(p.tensors[k])
    assert encoder_classify(rng.normal(size=(5, 8)), p) == 0.5


def test_duplication_keeps_pooled_block_output(rng):
    # attention with every token doubled returns each output twice, so the mean pool is unchanged
    p = enc_params()
    x = rng.normal(size=(3, 8))
    y1, _ = multi_head_attention(x, p)
    y2, _ = multi_head_attention(np.repeat(x, 2, axis=0), p)
    assert np.allclose(y2[::2], y1, atol=1e-12) and np.allclose(y2.mean(0), y1.mean(0), atol=1e-12)


def test_classify_byte_stable(rng):
    p = enc_params(seed=5)
    x = rng.normal(size=(6, 8))
    outs = {np.float64(encoder_classify(x, p.copy())).tobytes() for _ in range(5)}
    assert len(outs) == 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.sampled_from([1.0, 1e4]))
def test_classify_strictly_inside(seed, scale):
    p = enc_params(seed=seed % 100)
    p.tensors["cls.w"] = p.tensors["cls.w"] * scale
    yhat = encoder_classify(np.random.default_rng(seed).normal(size=(4, 8)), p)
    assert 0.0 < yhat < 1.0


def test_bce_closed_forms():
    assert abs(bce_loss([1], [0.5])[0] - np.log(2)) <= 1e-12
    loss, _ = bce_loss([1, 0], [1 - 1e-7, 1e-7])
    assert loss == pytest.approx(1e-7, rel=1e-6)


@pytest.mark.parametrize("bad", [[0.0, 0.5], [0.5, 1.0], [np.nan, 0.5]])
def test_bce_rejects_outside_unit_interval(bad):
    with pytest.raises(DomainError):
        bce_loss([1, 0], bad)


def test_bce_gradient_finite_difference(rng):
    y = rng.integers(0, 2, 16).astype(float)
    yhat = rng.uniform(0.05, 0.95, 16)
    _, g = bce_loss(y, yhat)
    num = numeric_grad(lambda: bce_loss(y, yhat)[0], yhat, eps=1e-6)
    assert rel_err(g, num) < 1e-6
    assert np.allclose(g, (yhat - y) / (16 * yhat * (1 - yhat)), rtol=1e-15)


def test_squash_clamps():
    p, dlog = squash(np.array([-1e3, 0.0, 1e3]))
    assert p[0] == enc.P_MIN and p[2] == 1 - enc.P_MIN and p[1] == 0.5
    assert dlog[0] == 0 and dlog[2] == 0


@pytest.mark.parametrize("ffn", [False, True])
@pytest.mark.parametrize("layers", [1, 2])
def test_encoder_gradients(rng, ffn, layers):
    p = enc_params(ffn=ffn, layers=layers, seed=2)
    cfg = p.config.attention
    feats = rng.normal(size=(3, 4, 8))
    y = np.array([1.0, 0.0, 1.0])

    def loss():
        logits, _ = enc.encoder_forward(feats, p.tensors, cfg)
        return bce_loss(y, squash(logits)[0])[0]

    logits, cache = enc.encoder_forward(feats, p.tensors, cfg)
    prob, dlog = squash(logits)
    _, dprob = bce_loss(y, prob)
    p.zero_grad()
    dfeats = enc.encoder_backward(dprob * dlog, cache, p.tensors, cfg, p.grads)
    assert rel_err(dfeats, numeric_grad(loss, feats)) < 1e-6
    for k, v in p.tensors.items():
        if k.endswith(".bk"):
            # a bias shared by every key shifts each score row uniformly; softmax ignores it
            assert np.max(np.abs(p.grads[k])) < 1e-12
            assert np.max(np.abs(numeric_grad(loss, v))) < 1e-9
        elif k.startswith(("enc", "cls")):
            assert rel_err(p.grads[k], numeric_grad(loss, v)) < 1e-6, k
