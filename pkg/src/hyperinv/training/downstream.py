"""Downstream fitting on a frozen pre-trained encoder.

The continuous variant learns the descriptor and a fresh linear head
jointly by Adam. The discrete variant rounds the learned descriptor to the
grid, pins it, and re-learns the head. The pre-trained weights are never
updated, and no augmentation is applied downstream.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..hypernet import TaskHead, round_descriptor
from ..numerics import AdamState, Tensor, adam_step, backward, clip_grad_norm, im2col, schedule_lr
from ..numerics import softmax_cross_entropy
from ..numerics.tensor import clip, sigmoid
from ..rng import stream
from .config import DOWNSTREAM
from .multitask import TrainingDiverged, epoch_batches


def _batch_size(n, config):
    return n if n <= config.full_batch_limit else config.batch_size


def evaluate(model, head, dataset, label_field, descriptor=None, batch_size=500):
    """Accuracy and mean cross-entropy of ``head`` on encoder features (eval-mode BN)."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    feats = features_of(model, descriptor, dataset.images, batch_size)
    return evaluate_features(head, feats, dataset.labels(label_field))


def evaluate_features(head, features, labels):
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    logits = np.asarray(features) @ head.weight.data
    loss = softmax_cross_entropy(logits, labels).item()
    return {"accuracy": float(np.mean(np.argmax(logits, axis=1) == labels)), "loss": loss}


def features_of(model, descriptor, images, batch_size=500):
    """Eval-mode features as a plain array, computed in chunks."""
    d = None if descriptor is None else np.asarray(descriptor, dtype=np.float64)
    chunks = [model.features(d, images[k:k + batch_size], mode="eval").data
              for k in range(0, len(images), batch_size)]
    return np.concatenate(chunks) if chunks else np.zeros((0, model.feature_dim))


def fit_head(features, labels, head_size, config=DOWNSTREAM, tag="head"):
    """Train a zero-initialized linear head on fixed features; returns (head, loss history)."""
    features = np.asarray(features)
    labels = np.asarray(labels)
    n = len(labels)
    head = TaskHead.zeros(features.shape[1], head_size)
    params = {"head": head.weight}
    state = AdamState(weight_decay=config.weight_decay)
    bs = _batch_size(n, config)
    steps_per_epoch = math.ceil(n / bs)
    schedule = config.lr_schedule(steps_per_epoch)
    history, step = [], 0
    for epoch in range(config.epochs):
        total = 0.0
        for idx in epoch_batches(n, bs, stream(config.seed, tag, "epoch", epoch)):
            head.weight.grad = None
            loss = softmax_cross_entropy(head(Tensor(features[idx])), labels[idx])
            if not np.isfinite(loss.data):
                raise TrainingDiverged(f"non-finite loss fitting {tag} at epoch {epoch}")
            backward(loss)
            grads = {"head": head.weight.grad}
            if config.grad_clip:
                clip_grad_norm(grads, config.grad_clip)
            adam_step(params, grads, state, schedule_lr(schedule, step))
            step += 1
            total += float(loss.data) * len(idx)
        history.append(total / n)
    return head, history


class DescriptorParam:
    """Unconstrained storage for a descriptor kept inside [0,1]^K."""

    def __init__(self, init, parametrization="sigmoid"):
        init = np.clip(np.asarray(init, dtype=np.float64), 1e-6, 1 - 1e-6)
        self.parametrization = parametrization
        if parametrization == "sigmoid":
            self.raw = Tensor(np.log(init) - np.log1p(-init), requires_grad=True)
        else:
            self.raw = Tensor(init, requires_grad=True)

    def value(self):
        if self.parametrization == "sigmoid":
            return sigmoid(self.raw)
        return clip(self.raw, 0.0, 1.0)

    def project(self):
        if self.parametrization == "clamp":
            self.raw.data = np.clip(self.raw.data, 0.0, 1.0)

    def numpy(self):
        return self.value().data.copy()


@dataclass
class DownstreamResult:
    task: str
    label_field: str
    n_per_class: int
    seed: int
    descriptor: list  # continuous i*
    rounded: list  # round(i*)
    train_continuous: dict
    test_continuous: dict | None
    train_discrete: dict | None = None
    test_discrete: dict | None = None
    baseline_train: dict | None = None
    baseline_test: dict | None = None
    descriptor_path: list = field(default_factory=list)
    loss_history: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def downstream_fit(bundle, data, label_field, head_size, config=DOWNSTREAM, test=None, init=0.5,
                   task=None, n_per_class=0, return_head=False):
    """Jointly fit descriptor and a fresh head on ``data``; the bundle stays frozen."""
    if not bundle.is_hyper:
        raise ValueError("descriptor fitting needs a hypernetwork bundle")
    model = bundle.frozen_model()
    K = model.n_families
    desc = DescriptorParam(np.full(K, init), config.parametrization)
    head = TaskHead.zeros(model.feature_dim, head_size)
    params = {"descriptor": desc.raw, "head": head.weight}
    # separate moments so the descriptor can run at its own learning rate
    head_state = AdamState(weight_decay=config.weight_decay)
    desc_state = AdamState(weight_decay=0.0 if config.decay_heads_only else config.weight_decay)
    desc_scale = (config.descriptor_lr or config.lr) / config.lr
    images = data.images
    labels = data.labels(label_field)
    n = len(labels)
    layer = model.arch.layers[0]
    cols_all, Ho, Wo = im2col(images, layer.kernel, layer.stride, layer.padding)
    cols_all = cols_all.reshape(n, Ho * Wo, -1)
    bs = _batch_size(n, config)
    steps_per_epoch = math.ceil(n / bs)
    schedule = config.lr_schedule(steps_per_epoch)
    path, losses, step = [desc.numpy().tolist()], [], 0
    bn_mode = "train" if config.bn_mode == "batch" else "eval"
    for epoch in range(config.epochs):
        total = 0.0
        for idx in epoch_batches(n, bs, stream(config.seed, "downstream", "epoch", epoch)):
            desc.raw.grad = None
            head.weight.grad = None
            cols = cols_all[idx].reshape(len(idx) * Ho * Wo, -1)
            feats = model.features(desc.value(), images[idx], mode=bn_mode, cols=cols)
            loss = softmax_cross_entropy(head(feats), labels[idx])
            if not np.isfinite(loss.data):
                raise TrainingDiverged(f"non-finite downstream loss at epoch {epoch}")
            backward(loss)
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            if config.grad_clip:
                clip_grad_norm(grads, config.grad_clip)
            lr = schedule_lr(schedule, step)
            adam_step({"head": head.weight}, {"head": grads["head"]}, head_state, lr)
            if "descriptor" in grads:
                adam_step({"descriptor": desc.raw}, {"descriptor": grads["descriptor"]}, desc_state, lr * desc_scale)
            desc.project()
            step += 1
            total += float(loss.data) * len(idx)
        losses.append(total / n)
        path.append(desc.numpy().tolist())
    i_star = desc.numpy()
    train_feats = features_of(model, i_star, images)
    result = DownstreamResult(
        task=task or label_field, label_field=label_field, n_per_class=n_per_class, seed=config.seed,
        descriptor=i_star.tolist(), rounded=round_descriptor(i_star, config.levels).tolist(),
        train_continuous=evaluate_features(head, train_feats, labels),
        test_continuous=None if test is None else evaluate(model, head, test, label_field, i_star),
        descriptor_path=path, loss_history=losses,
    )
    return (result, head) if return_head else result


def downstream_fit_discrete(bundle, data, label_field, head_size, i_star, config=DOWNSTREAM, test=None):
    """Round ``i_star``, pin it, and train a fresh head. Returns (rounded, head, metrics)."""
    rounded = round_descriptor(i_star, config.levels)
    model = bundle.frozen_model()
    feats = features_of(model, rounded, data.images)
    head, history = fit_head(feats, data.labels(label_field), head_size, config, tag="discrete")
    metrics = {"train": evaluate_features(head, feats, data.labels(label_field)), "loss_history": history}
    if test is not None:
        metrics["test"] = evaluate(model, head, test, label_field, rounded)
    return rounded, head, metrics


def fixed_feature_fit(bundle, data, label_field, head_size, config=DOWNSTREAM, test=None, descriptor=None):
    """New head on frozen features (the MTL baseline's downstream protocol)."""
    model = bundle.frozen_model()
    feats = features_of(model, descriptor, data.images)
    head, history = fit_head(feats, data.labels(label_field), head_size, config, tag="fixed")
    metrics = {"train": evaluate_features(head, feats, data.labels(label_field)), "loss_history": history}
    if test is not None:
        metrics["test"] = evaluate(model, head, test, label_field, descriptor)
    return head, metrics


def run_downstream_cell(bundle, train, test, label_field, head_size, n_per_class, config=DOWNSTREAM,
                        baseline=None, task=None):
    """Continuous fit, discretized refit and (optionally) the baseline for one (N, seed) cell."""
    from ..data import subsample_per_class

    data = subsample_per_class(train, n_per_class, label_field, config.seed)
    result = downstream_fit(bundle, data, label_field, head_size, config, test=test, task=task,
                            n_per_class=n_per_class)
    _, _, disc = downstream_fit_discrete(bundle, data, label_field, head_size, result.descriptor, config, test)
    result.train_discrete = disc["train"]
    result.test_discrete = disc.get("test")
    if baseline is not None:
        _, base = fixed_feature_fit(baseline, data, label_field, head_size, config, test)
        result.baseline_train = base["train"]
        result.baseline_test = base.get("test")
    return result
