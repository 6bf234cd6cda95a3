"""Two-phase training, evaluation and repeated stratified k-fold cross-validation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import AugmentPolicy, augment, to_arrays
from .errors import DomainError, NumericError, StratificationError
from .model import (ModelConfig, ModelParams, fit_input_scale, loss_and_grad, predict,
                    probe_loss_and_grad)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    pretrain_lr: float | None = 0.05
    momentum: float = 0.9
    pretrain_epochs: int = 2
    epochs: int = 20
    batch_size: int = 8
    seed: int = 0
    clip_norm: float = 0.5
    head_lr_scale: float = 1.0  # lr multiplier for the classifier and probe heads
    schedule: str = "cosine"
    policy: AugmentPolicy = field(default_factory=AugmentPolicy)

    def __post_init__(self):
        if self.lr < 0 or (self.pretrain_lr or 0) < 0 or self.head_lr_scale < 0 or not 0 <= self.momentum < 1:
            raise DomainError("need non-negative learning rates and 0 <= momentum < 1")
        if self.batch_size < 1 or self.epochs < 0 or self.pretrain_epochs < 0:
            raise DomainError("batch_size must be >= 1 and epoch counts >= 0")
        if self.schedule not in ("cosine", "constant"):
            raise DomainError(f"unknown lr schedule {self.schedule!r}")

    def lr_at(self, epoch, epochs, phase="train"):
        base = self.lr if phase != "pretrain" or self.pretrain_lr is None else self.pretrain_lr
        if self.schedule == "constant" or epochs <= 1:
            return base
        return base * 0.5 * (1 + np.cos(np.pi * epoch / epochs))


class SGD:
    """Heavy-ball momentum with optional global-norm clipping."""

    def __init__(self, params: ModelParams, lr, momentum, clip_norm=None, lr_scale=None):
        self.params, self.lr, self.mu, self.clip = params, lr, momentum, clip_norm
        self.lr_scale = dict(lr_scale or {})  # tensor-name prefix -> lr multiplier
        self.vel = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    def _scale(self, name):
        for prefix, m in self.lr_scale.items():
            if name.startswith(prefix):
                return m
        return 1.0

    def step(self):
        p = self.params
        scale = 1.0
        if self.clip:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in p.grads.values()))
            if norm > self.clip:
                scale = self.clip / norm
        for k, g in p.grads.items():
            v = self.vel.setdefault(k, np.zeros_like(g))
            v *= self.mu
            v += scale * g
            if self.lr:
                p.tensors[k] = p.tensors[k] - self.lr * self._scale(k) * v


def _epoch_batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _augmented(dataset, idx, policy, seed_seq):
    seeds = seed_seq.generate_state(len(idx))
    return [augment(dataset[i], policy, int(s)) for i, s in zip(idx, seeds)]


def _run_phase(name, params, dataset, hyper, epochs, step_fn, history, policy):
    heads = {"cls.": hyper.head_lr_scale, "probe.": hyper.head_lr_scale}
    opt = SGD(params, hyper.lr, hyper.momentum, hyper.clip_norm, heads)
    for epoch in range(epochs):
        opt.lr = hyper.lr_at(epoch, epochs, name)
        ss = np.random.SeedSequence([hyper.seed, 1 if name == "pretrain" else 2, epoch])
        order_seq, aug_seq = ss.spawn(2)
        batches = _epoch_batches(len(dataset), hyper.batch_size, np.random.default_rng(order_seq))
        aug_seeds = aug_seq.spawn(len(batches))
        tot, correct, count = 0.0, 0.0, 0
        for bi, idx in enumerate(batches):
            samples = _augmented(dataset, idx, policy, aug_seeds[bi])
            sar, rgb, y = to_arrays(samples)
            loss, prob = step_fn(params, sar, rgb, y)
            if not np.isfinite(loss):
                raise NumericError(f"{name} diverged at epoch {epoch} batch {bi}: loss={loss}")
            opt.step()
            tot += loss * len(idx)
            # pretraining scores every slice against its sample label
            yy = np.repeat(y, len(prob) // len(y))
            correct += float(np.mean((prob > 0.5) == (yy > 0.5))) * len(idx)
            count += len(idx)
        history.append(dict(phase=name, epoch=epoch, loss=tot / count, accuracy=correct / count))
        log.info("%s epoch %d loss %.4f acc %.3f", name, epoch, tot / count, correct / count)


def train(dataset, hyper: TrainConfig | None = None, model_cfg: ModelConfig | None = None):
    """Pretrain the fusion extractor on single slices, then train the whole model.

    Returns ``(params, history)``; ``history`` holds one dict per epoch.
    """
    if not dataset:
        raise DomainError("cannot train on an empty dataset")
    hyper = hyper or TrainConfig()
    model_cfg = model_cfg or ModelConfig()
    params = ModelParams.init(model_cfg, seed=hyper.seed)
    sar, rgb, _ = to_arrays(dataset)
    fit_input_scale(params, sar, rgb)
    history = []
    if hyper.pretrain_epochs:
        rng = np.random.default_rng([hyper.seed, 7])
        params.tensors["probe.w"] = rng.normal(0, 1 / np.sqrt(model_cfg.d_model), model_cfg.d_model)
        params.tensors["probe.b"] = np.array(0.0)
        params.zero_grad()
        # phase 1 keeps the camera on so the extractor sees droplets before dropout kicks in
        policy = replace(hyper.policy, rgb_drop=0.0)
        _run_phase("pretrain", params, dataset, hyper, hyper.pretrain_epochs, probe_loss_and_grad, history,
                   policy)
        del params.tensors["probe.w"], params.tensors["probe.b"]
        params.zero_grad()
    _run_phase("train", params, dataset, hyper, hyper.epochs, loss_and_grad, history, hyper.policy)
    return params, history


def evaluate(params: ModelParams, samples) -> dict:
    """Accuracy and confusion counts with wet as the positive class (threshold 0.5)."""
    if not samples:
        raise DomainError("cannot evaluate on an empty sample list")
    sar, rgb, y = to_arrays(samples)
    prob = predict(params, sar, rgb)
    pred = prob > 0.5
    truth = y > 0.5
    tp = int(np.sum(pred & truth))
    tn = int(np.sum(~pred & ~truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    return dict(accuracy=(tp + tn) / len(y), tp=tp, tn=tn, fp=fp, fn=fn, n=len(y))


@dataclass(frozen=True)
class FoldPlan:
    k: int
    repeats: int
    seed: int
    assignments: tuple  # one int array per repeat: sample index -> fold id

    def split(self, repeat, fold):
        a = self.assignments[repeat]
        return np.flatnonzero(a != fold), np.flatnonzero(a == fold)


def make_fold_plan(labels, k=5, repeats=10, seed=0) -> FoldPlan:
    """Stratified assignment: each class is shuffled and dealt round-robin over the folds."""
    labels = np.asarray(labels).astype(int)
    n = labels.size
    if k < 2 or k > n:
        raise DomainError(f"need 2 <= k <= dataset size ({n}), got k={k}")
    classes = np.unique(labels)
    if classes.size < 2:
        raise StratificationError("both classes must be present for stratified folds")
    rng = np.random.default_rng(seed)
    plans = []
    for _ in range(repeats):
        a = np.empty(n, dtype=int)
        offset = 0
        for c in classes:
            idx = rng.permutation(np.flatnonzero(labels == c))
            a[idx] = (offset + np.arange(idx.size)) % k
            offset += idx.size
        for f in range(k):
            if np.unique(labels[a != f]).size < classes.size:
                raise StratificationError(f"training split of fold {f} lacks a class")
        plans.append(a)
    return FoldPlan(k, repeats, seed, tuple(plans))


def summarize(accuracies) -> dict:
    acc = np.asarray(accuracies, dtype=float)
    std = float(acc.std(ddof=1)) if acc.size > 1 else 0.0
    return dict(mean=float(acc.mean()), std=std, n=int(acc.size))


def format_summary(summary) -> str:
    return f"accuracy {100 * summary['mean']:.2f}% ± {100 * summary['std']:.2f}%"


def kfold_cv(dataset, k=5, repeats=10, seed=0, hyper: TrainConfig | None = None,
             model_cfg: ModelConfig | None = None, train_fn=None):
    """Repeated stratified k-fold CV. Returns ``(rows, summary)``.

    ``rows`` has one dict per (repeat, fold); ``summary`` holds mean and sample std of accuracy.
    """
    hyper = hyper or TrainConfig()
    plan = make_fold_plan([s.label for s in dataset], k, repeats, seed)
    rows = []
    for r in range(repeats):
        for f in range(k):
            tr, te = plan.split(r, f)
            train_set = [dataset[i] for i in tr]
            if train_fn is None:
                params, _ = train(train_set, hyper, model_cfg)
            else:
                params = train_fn(train_set)
            m = evaluate(params, [dataset[i] for i in te])
            rows.append(dict(repeat=r, fold=f, **m))
            log.info("repeat %d fold %d accuracy %.3f", r, f, m["accuracy"])
    return rows, summarize([row["accuracy"] for row in rows])
