"""Single-depth fusion: SAR-masked RGB plus a balanced SAR channel, conv stack, GAP, CAM.

Convolutions run channels-last internally (``[N, H, W, C]``); the public
single-image helpers take and return channels-first arrays.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, NumericError
from .recon import normalize01


def mask_fuse(sar_norm, rgb, alpha: float) -> np.ndarray:
    """Stack ``sar * rgb[c]`` for the three colour channels and ``alpha * sar`` as a fourth.

    ``sar_norm`` is ``[H, W]`` in [0, 1]; ``rgb`` is ``[3, H, W]``.
    """
    sar = np.asarray(getattr(sar_norm, "pixels", sar_norm), dtype=float)
    rgb = np.asarray(rgb, dtype=float)
    if rgb.ndim != 3 or rgb.shape[0] != 3 or rgb.shape[1:] != sar.shape:
        raise DomainError(f"rgb {rgb.shape} does not match sar {sar.shape}")
    if sar.size and (sar.min() < 0 or sar.max() > 1):
        raise DomainError("SAR mask must be normalized to [0, 1]")
    out = np.empty((4,) + sar.shape)
    out[:3] = sar[None] * rgb
    out[3] = alpha * sar
    return out


def rgb_dropout(rgb, p: float = 0.2, seed=None) -> np.ndarray:
    """Blank the whole camera image with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"dropout probability {p} outside [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rgb = np.asarray(rgb, dtype=float)
    if rng.random() < p:
        return np.zeros_like(rgb)
    return rgb.copy()


def _patches(xp, kh, kw, stride, ho, wo):
    return [xp[:, di:di + stride * ho:stride, dj:dj + stride * wo:stride, :]
            for di in range(kh) for dj in range(kw)]


def _cols(x, kh, kw, stride, pad):
    n, h, wd, cin = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    return np.concatenate(_patches(xp, kh, kw, stride, ho, wo), axis=-1)


def conv2d(x, w, b, stride=2, pad=1, keep_cols=False):
    """Cross-correlation on ``x [N, H, W, Cin]`` with ``w [Cout, Cin, kh, kw]``.

    With ``keep_cols`` the im2col matrix is returned too, for reuse in the backward pass.
    """
    cout, cin, kh, kw = w.shape
    cols = _cols(x, kh, kw, stride, pad)
    out = cols @ w.transpose(2, 3, 1, 0).reshape(kh * kw * cin, cout) + b
    return (out, cols) if keep_cols else out


def conv2d_backward(dout, x, w, stride=2, pad=1, cols=None, need_dx=True):
    """Gradients ``(dx, dw, db)``; ``dx`` is None when not requested."""
    n, h, wd, cin = x.shape
    cout, _, kh, kw = w.shape
    if cols is None:
        cols = _cols(x, kh, kw, stride, pad)
    ho, wo = dout.shape[1:3]
    flat = dout.reshape(-1, cout)
    dw = (cols.reshape(-1, cols.shape[-1]).T @ flat).reshape(kh, kw, cin, cout).transpose(3, 2, 0, 1)
    if not need_dx:
        return None, dw, flat.sum(axis=0)
    wmat = w.transpose(2, 3, 1, 0).reshape(kh * kw * cin, cout)
    dcols = dout @ wmat.T
    dxp = np.zeros((n, h + 2 * pad, wd + 2 * pad, cin))
    for t, (di, dj) in enumerate((a, b) for a in range(kh) for b in range(kw)):
        dxp[:, di:di + stride * ho:stride, dj:dj + stride * wo:stride, :] += dcols[..., t * cin:(t + 1) * cin]
    dx = dxp[:, pad:pad + h, pad:pad + wd, :] if pad else dxp
    return dx, dw, flat.sum(axis=0)


def conv_names(params):
    return sorted((k for k in params.tensors if k.startswith("conv") and k.endswith(".w")),
                  key=lambda s: int(s[4:].split(".")[0]))


def cnn_stack_forward(x, params):
    """ReLU conv stack on channels-last input; returns output and per-layer cache."""
    cache = []
    for wname in conv_names(params):
        w = params.tensors[wname]
        b = params.tensors[wname[:-2] + ".b"]
        z, cols = conv2d(x, w, b, keep_cols=True)
        cache.append((x, z, cols))
        x = np.maximum(z, 0.0)
    return x, cache


def cnn_stack_backward(dout, cache, params, grads, input_grad=True):
    """Backpropagate through the stack. Returns d input, or the first layer's d pre-activation
    when ``input_grad`` is False (skips the most expensive scatter)."""
    layers = list(zip(conv_names(params), cache))
    for i in range(len(layers) - 1, -1, -1):
        wname, (x, z, cols) = layers[i]
        dz = dout * (z > 0)
        need = bool(i) or input_grad
        dx, dw, db = conv2d_backward(dz, x, params.tensors[wname], cols=cols, need_dx=need)
        grads[wname] += dw
        grads[wname[:-2] + ".b"] += db
        dout = dx if need else dz
    return dout


def cnn_forward(fused, params) -> np.ndarray:
    """Feature map ``[C, H', W']`` of one fused ``[4, H, W]`` image."""
    params.check_finite()
    x = np.moveaxis(np.asarray(fused, dtype=float), 0, -1)[None] * params.buffers["input_scale"]
    out, _ = cnn_stack_forward(x, params)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite activation in conv stack")
    return np.moveaxis(out[0], -1, 0)


def gap(fm) -> np.ndarray:
    """Spatial mean of each channel of a ``[C, H, W]`` map."""
    fm = np.asarray(fm, dtype=float)
    return fm.reshape(fm.shape[0], -1).mean(axis=1)


def cam(fm, class_weights) -> np.ndarray:
    """Class activation heatmap: weighted channel sum, min-max normalized."""
    fm = np.asarray(fm, dtype=float)
    w = np.asarray(class_weights, dtype=float).ravel()
    if w.size != fm.shape[0]:
        raise DomainError(f"{w.size} class weights for {fm.shape[0]} channels")
    return normalize01(np.tensordot(w, fm, axes=1))
