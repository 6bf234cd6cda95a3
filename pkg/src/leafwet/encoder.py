"""Depth-sequence encoder: positional encoding, multi-head attention blocks, BCE.

All sequence tensors are ``[B, S, d_model]``. Every ``*_forward`` returns its
output together with a cache consumed by the matching ``*_backward``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError

P_MIN = 1e-7


@dataclass(frozen=True)
class AttentionConfig:
    d_model: int = 32
    n_heads: int = 2
    n_layers: int = 1
    ffn: bool = False
    d_ff: int = 64
    ln_eps: float = 1e-12

    def __post_init__(self):
        if min(self.d_model, self.n_heads, self.n_layers) < 1:
            raise DomainError("d_model, n_heads and n_layers must all be >= 1")
        if self.d_model % self.n_heads:
            raise DomainError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")


def positional_encoding(depth, d_model: int) -> np.ndarray:
    """Encoding for one depth index: sin on even dimensions, cos on odd ones.

    Odd dimension ``i`` shares its frequency with dimension ``i - 1``.
    """
    if d_model < 1:
        raise DomainError("d_model must be >= 1")
    i = np.arange(d_model)
    expo = np.where(i % 2 == 0, 2 * i, 2 * (i - 1)) / d_model
    arg = depth / np.power(10000.0, expo)
    return np.where(i % 2 == 0, np.sin(arg), np.cos(arg))


def pe_matrix(n: int, d_model: int) -> np.ndarray:
    return np.stack([positional_encoding(s, d_model) for s in range(n)]) if n else np.zeros((0, d_model))


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm_forward(x, g, b, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def layer_norm_backward(dy, cache, g):
    xhat, inv = cache
    dxhat = dy * g
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _split(x, h):
    b, s, d = x.shape
    return x.reshape(b, s, h, d // h).transpose(0, 2, 1, 3)


def _merge(x):
    b, h, s, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, s, h * dh)


def attention_forward(x, p, prefix, cfg: AttentionConfig):
    """``LN(x + MHA(x))``; the cache holds the attention weights under ``"attn"``."""
    t = lambda n: p[f"{prefix}.{n}"]
    h = cfg.n_heads
    q, k, v = (_split(x @ t(f"w{n}") + t(f"b{n}"), h) for n in "qkv")
    scale = 1.0 / np.sqrt(cfg.d_model // h)
    a = softmax((q @ k.transpose(0, 1, 3, 2)) * scale)
    o = _merge(a @ v)
    z = x + o @ t("wo") + t("bo")
    y, ln = layer_norm_forward(z, t("ln1_g"), t("ln1_b"), cfg.ln_eps)
    cache = dict(x=x, q=q, k=k, v=v, attn=a, o=o, z=z, ln=ln, scale=scale)
    if cfg.ffn:
        hpre = y @ t("w1") + t("b1")
        hact = np.maximum(hpre, 0.0)
        z2 = y + hact @ t("w2") + t("b2")
        y2, ln2 = layer_norm_forward(z2, t("ln2_g"), t("ln2_b"), cfg.ln_eps)
        cache.update(y1=y, hpre=hpre, hact=hact, ln2=ln2)
        y = y2
    return y, cache


def _acc(grads, name, val):
    grads[name] += val


def attention_backward(dy, cache, p, prefix, cfg: AttentionConfig, grads):
    t = lambda n: p[f"{prefix}.{n}"]
    g = lambda n, val: _acc(grads, f"{prefix}.{n}", val)
    flat = lambda a: a.reshape(-1, a.shape[-1])
    if cfg.ffn:
        dz2, dg2, db2 = layer_norm_backward(dy, cache["ln2"], t("ln2_g"))
        g("ln2_g", dg2), g("ln2_b", db2)
        g("w2", flat(cache["hact"]).T @ flat(dz2)), g("b2", flat(dz2).sum(0))
        dh = (dz2 @ t("w2").T) * (cache["hpre"] > 0)
        g("w1", flat(cache["y1"]).T @ flat(dh)), g("b1", flat(dh).sum(0))
        dy = dz2 + dh @ t("w1").T
    dz, dg1, db1 = layer_norm_backward(dy, cache["ln"], t("ln1_g"))
    g("ln1_g", dg1), g("ln1_b", db1)
    g("wo", flat(cache["o"]).T @ flat(dz)), g("bo", flat(dz).sum(0))
    do = _split(dz @ t("wo").T, cfg.n_heads)
    a, q, k, v = cache["attn"], cache["q"], cache["k"], cache["v"]
    da = do @ v.transpose(0, 1, 3, 2)
    dv = a.transpose(0, 1, 3, 2) @ do
    ds = a * (da - (da * a).sum(axis=-1, keepdims=True)) * cache["scale"]
    dq = ds @ k
    dk = ds.transpose(0, 1, 3, 2) @ q
    x = cache["x"]
    dx = dz.copy()
    for n, d in (("q", dq), ("k", dk), ("v", dv)):
        d = _merge(d)
        g(f"w{n}", flat(x).T @ flat(d)), g(f"b{n}", flat(d).sum(0))
        dx += d @ t(f"w{n}").T
    return dx


def encoder_forward(feats, p, cfg: AttentionConfig):
    """PE add, attention blocks, mean pool, linear readout. Returns logits ``[B]``."""
    b, s, d = feats.shape
    x = feats + pe_matrix(s, d)[None]
    caches = []
    for layer in range(cfg.n_layers):
        x, c = attention_forward(x, p, f"enc{layer}", cfg)
        caches.append(c)
    pooled = x.mean(axis=1)
    logits = pooled @ p["cls.w"] + p["cls.b"]
    return logits, dict(layers=caches, pooled=pooled, seq_len=s)


def encoder_backward(dlogits, cache, p, cfg: AttentionConfig, grads):
    pooled, s = cache["pooled"], cache["seq_len"]
    grads["cls.w"] += pooled.T @ dlogits
    grads["cls.b"] += dlogits.sum()
    dx = np.repeat((np.outer(dlogits, p["cls.w"]) / s)[:, None, :], s, axis=1)
    for layer in reversed(range(cfg.n_layers)):
        dx = attention_backward(dx, cache["layers"][layer], p, f"enc{layer}", cfg, grads)
    return dx


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def squash(logits):
    """Logistic squashing clamped to [P_MIN, 1 - P_MIN]; also returns d prob / d logit."""
    yhat = sigmoid(logits)
    clamped = np.clip(yhat, P_MIN, 1.0 - P_MIN)
    dlog = np.where(clamped == yhat, yhat * (1.0 - yhat), 0.0)
    return clamped, dlog


def bce_loss(y, yhat):
    """Mean binary cross-entropy and its gradient with respect to the predictions."""
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.size != yhat.size or y.size == 0:
        raise DomainError("labels and predictions must be non-empty and equal length")
    if np.any((yhat <= 0) | (yhat >= 1)) or not np.all(np.isfinite(yhat)):
        raise DomainError("predictions must lie strictly inside (0, 1)")
    n = y.size
    loss = -np.mean(y * np.log(yhat) + (1 - y) * np.log1p(-yhat))
    grad = (yhat - y) / (n * yhat * (1 - yhat))
    return float(loss), grad


def check_finite(name, a):
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite values in {name}")
