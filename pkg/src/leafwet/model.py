"""Full fusion + depth-encoder classifier with hand-written reverse mode.

Batch inputs are normalized SAR stacks ``sar [B, S, H, W]`` and camera images
``rgb [B, 3, H, W]``; the output is the probability that the leaf is wet.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import encoder as enc
from .encoder import AttentionConfig
from .errors import DomainError, NumericError
from .fusion import cnn_stack_backward, cnn_stack_forward, conv2d, conv_names

MODALITIES = ("fused", "sar", "rgb")


@dataclass(frozen=True)
class ModelConfig:
    conv_channels: tuple = (8, 16, 32)
    n_heads: int = 2
    n_layers: int = 1
    ffn: bool = False
    d_ff: int = 64
    modality: str = "fused"
    alpha_init: float = 1.0
    conv_bias_init: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if not self.conv_channels:
            raise DomainError("need at least one conv layer")
        if self.modality not in MODALITIES:
            raise DomainError(f"modality must be one of {MODALITIES}")
        self.attention  # validates head split

    @property
    def d_model(self) -> int:
        return self.conv_channels[-1]

    @property
    def attention(self) -> AttentionConfig:
        return AttentionConfig(self.d_model, self.n_heads, self.n_layers, self.ffn, self.d_ff)

    def to_dict(self):
        return asdict(self)


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict = field(default_factory=dict)
    grads: dict = field(default_factory=dict)
    # fixed per-channel gain on the fused input; set from training data, not trained
    buffers: dict = field(default_factory=lambda: {"input_scale": np.ones(4)})

    def __post_init__(self):
        if not self.grads:
            self.zero_grad()

    @classmethod
    def init(cls, config: ModelConfig, seed=0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        t = {"alpha": np.array(float(config.alpha_init))}
        cin = 4
        for i, cout in enumerate(config.conv_channels):
            t[f"conv{i}.w"] = rng.normal(0, np.sqrt(2.0 / (cin * 9)), (cout, cin, 3, 3))
            t[f"conv{i}.b"] = np.full(cout, float(config.conv_bias_init))
            cin = cout
        d = config.d_model
        xav = lambda m, n: rng.uniform(-1, 1, (m, n)) * np.sqrt(6.0 / (m + n))
        for layer in range(config.n_layers):
            pre = f"enc{layer}"
            for n in "qkvo":
                t[f"{pre}.w{n}"] = xav(d, d)
                t[f"{pre}.b{n}"] = np.zeros(d)
            t[f"{pre}.ln1_g"], t[f"{pre}.ln1_b"] = np.ones(d), np.zeros(d)
            if config.ffn:
                t[f"{pre}.w1"], t[f"{pre}.b1"] = xav(d, config.d_ff), np.zeros(config.d_ff)
                t[f"{pre}.w2"], t[f"{pre}.b2"] = xav(config.d_ff, d), np.zeros(d)
                t[f"{pre}.ln2_g"], t[f"{pre}.ln2_b"] = np.ones(d), np.zeros(d)
        t["cls.w"] = rng.normal(0, 1 / np.sqrt(d), d)
        t["cls.b"] = np.array(0.0)
        return cls(config, t)

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()},
                           buffers={k: v.copy() for k, v in self.buffers.items()})

    def names(self):
        return list(self.tensors)

    def check_finite(self):
        for k, v in self.tensors.items():
            if not np.all(np.isfinite(v)):
                raise NumericError(f"parameter {k} has non-finite entries")

    def __getitem__(self, name):
        return self.tensors[name]


def _modal_inputs(config, sar, rgb):
    if config.modality == "sar":
        rgb = np.zeros_like(rgb)
    elif config.modality == "rgb":
        sar = np.ones_like(sar)
    return sar, rgb


def gray_world(rgb):
    """Divide each ``[3, H, W]`` image by its mean intensity; blank images stay blank.

    Cancels a global lighting gain, so only relative brightness (droplet glints
    against leaf and soil) reaches the network.
    """
    rgb = np.asarray(rgb, dtype=float)
    m = rgb.mean(axis=(-3, -2, -1), keepdims=True)
    return np.where(m > 0, rgb / np.where(m > 0, m, 1.0), 0.0)


def fuse_batch(params, sar, rgb):
    """Channels-last fused images ``[B*S, H, W, 4]``."""
    b, s, h, w = sar.shape
    sar, rgb = _modal_inputs(params.config, sar, gray_world(rgb))
    x = np.empty((b, s, h, w, 4))
    x[..., :3] = sar[..., None] * np.moveaxis(rgb, 1, -1)[:, None]
    alpha = 0.0 if params.config.modality == "rgb" else params["alpha"]
    x[..., 3] = alpha * sar
    x *= params.buffers["input_scale"]
    return x.reshape(b * s, h, w, 4), sar


def fit_input_scale(params, sar, rgb):
    """Set ``input_scale`` so each fused channel has unit RMS on the given inputs (at alpha = 1)."""
    probe = ModelParams(params.config, {"alpha": np.array(1.0)})
    x, _ = fuse_batch(probe, sar, rgb)
    rms = np.sqrt(np.mean(x * x, axis=(0, 1, 2)))
    params.buffers["input_scale"] = np.where(rms > 0, 1.0 / np.where(rms > 0, rms, 1.0), 1.0)


def features(params, sar, rgb):
    """Fused-image GAP features ``[B, S, C]`` plus the cache needed to differentiate them."""
    b, s = sar.shape[:2]
    x, sar_used = fuse_batch(params, sar, rgb)
    fm, conv_cache = cnn_stack_forward(x, params)
    feats = fm.mean(axis=(1, 2)).reshape(b, s, -1)
    return feats, dict(conv=conv_cache, fm_shape=fm.shape, sar=sar_used)


def features_backward(dfeats, cache, params, grads):
    n, ho, wo, c = cache["fm_shape"]
    dfm = np.broadcast_to(dfeats.reshape(n, 1, 1, c) / (ho * wo), (n, ho, wo, c))
    dz0 = cnn_stack_backward(dfm, cache["conv"], params, grads, input_grad=False)
    if params.config.modality != "rgb":
        # alpha enters only through channel 3, so its pre-activation sensitivity is a 1-channel conv
        w0 = params[conv_names(params)[0]]
        sar = cache["sar"].reshape((-1,) + cache["sar"].shape[2:] + (1,))
        dpre = conv2d(sar * params.buffers["input_scale"][3], w0[:, 3:4], 0.0)
        grads["alpha"] += np.sum(dz0 * dpre)


def forward(params: ModelParams, sar, rgb):
    """Wet probabilities ``[B]`` and the cache for ``backward``."""
    params.check_finite()
    cfg = params.config.attention
    feats, fcache = features(params, sar, rgb)
    logits, ecache = enc.encoder_forward(feats, params.tensors, cfg)
    prob, dlog = enc.squash(logits)
    if not np.all(np.isfinite(prob)):
        raise NumericError("non-finite model output")
    return prob, dict(features=fcache, encoder=ecache, dlog=dlog)


def backward(params: ModelParams, cache, dprob):
    """Accumulate d loss / d parameter into ``params.grads`` given d loss / d prob."""
    cfg = params.config.attention
    dlogits = np.asarray(dprob) * cache["dlog"]
    dfeats = enc.encoder_backward(dlogits, cache["encoder"], params.tensors, cfg, params.grads)
    features_backward(dfeats, cache["features"], params, params.grads)
    for k, g in params.grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {k}")
    return params.grads


def loss_and_grad(params: ModelParams, sar, rgb, y):
    """BCE loss of the full model on a batch; gradients land in ``params.grads``."""
    params.zero_grad()
    prob, cache = forward(params, sar, rgb)
    loss, dprob = enc.bce_loss(y, prob)
    backward(params, cache, dprob)
    return loss, prob


def probe_loss_and_grad(params: ModelParams, sar, rgb, y):
    """Single-slice pretraining objective: each slice classified on its own GAP vector.

    The GAP vector is standardized (layer norm without gain or shift) before the
    temporary linear probe ``probe.w`` / ``probe.b``, matching the scale the
    encoder head sees later.
    """
    params.zero_grad()
    b, s = sar.shape[:2]
    d = params.config.d_model
    feats, cache = features(params, sar, rgb)
    one, zero = np.ones(d), np.zeros(d)
    f, ln = enc.layer_norm_forward(feats.reshape(b * s, d), one, zero, params.config.attention.ln_eps)
    logits = f @ params["probe.w"] + params["probe.b"]
    prob, dlog = enc.squash(logits)
    loss, dprob = enc.bce_loss(np.repeat(np.asarray(y, float), s), prob)
    dl = dprob * dlog
    params.grads["probe.w"] += f.T @ dl
    params.grads["probe.b"] += dl.sum()
    df, _, _ = enc.layer_norm_backward(np.outer(dl, params["probe.w"]), ln, one)
    features_backward(df.reshape(b, s, d), cache, params, params.grads)
    return loss, prob


def predict(params: ModelParams, sar, rgb, batch_size=32) -> np.ndarray:
    out = []
    for i in range(0, len(sar), batch_size):
        out.append(forward(params, sar[i:i + batch_size], rgb[i:i + batch_size])[0])
    return np.concatenate(out) if out else np.zeros(0)


def multi_head_attention(seq, params: ModelParams, layer: int = 0):
    """One encoder block applied to a single ``[S, d]`` sequence (PE already added).

    Returns the block output and the per-head attention weights ``[H, S, S]``.
    """
    y, cache = enc.attention_forward(np.asarray(seq, float)[None], params.tensors, f"enc{layer}",
                                     params.config.attention)
    if not np.all(np.isfinite(y)):
        raise NumericError("non-finite attention output")
    return y[0], cache["attn"][0]


def encoder_classify(seq, params: ModelParams) -> float:
    """Wet probability for one ``[S, d]`` sequence of depth-ordered feature vectors."""
    seq = np.asarray(seq, dtype=float)
    logits, _ = enc.encoder_forward(seq[None], params.tensors, params.config.attention)
    prob, _ = enc.squash(logits)
    enc.check_finite("encoder output", prob)
    return float(prob[0])
