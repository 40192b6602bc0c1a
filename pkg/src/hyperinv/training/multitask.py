"""Multi-task pre-training: hypernetwork with per-task descriptors, and the plain MTL baseline.

Every optimizer step draws one batch from every task, augments it with the
task's descriptor, and minimizes the uniformly weighted mean of the task
cross-entropies with respect to the encoder and all heads.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..data import SYNTHETIC_FAMILIES, apply_descriptor_augmentation
from ..hypernet import SYNTHETIC_ARCH, HyperEncoder, PlainEncoder, TaskHead
from ..numerics import AdamState, adam_step, backward, clip_grad_norm, schedule_lr, softmax_cross_entropy
from ..numerics.tensor import stack
from ..rng import stream
from .bundle import PretrainedBundle
from .config import PRETRAIN

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TaskSpec:
    name: str
    dataset: object  # LabeledDataset
    label_field: str
    descriptor: tuple
    head_size: int

    def info(self):
        return {"name": self.name, "label_field": self.label_field,
                "descriptor": [float(v) for v in self.descriptor], "head_size": self.head_size}


def synthetic_tasks(dataset):
    """Digit / color / rotation tasks with descriptors ordered (rotation, color)."""
    return [
        TaskSpec("digit", dataset, "digit", (1.0, 1.0), 10),
        TaskSpec("color", dataset, "color", (1.0, 0.0), 3),
        TaskSpec("rotation", dataset, "rotation", (0.0, 1.0), 7),
    ]


def epoch_batches(n, batch_size, rng):
    perm = rng.permutation(n)
    return [perm[k:k + batch_size] for k in range(0, n, batch_size)]


def task_loss(model, head, descriptor, batches, label_field):
    """Cross-entropy over ``m`` augmented copies: logits are averaged when labels agree."""
    labels = [b.label(label_field) for b in batches]
    outs = [head(model.features(descriptor, b.images, mode="train")) for b in batches]
    if len(outs) == 1:
        return softmax_cross_entropy(outs[0], labels[0]), outs[0].data, labels[0]
    if all(np.array_equal(labels[0], l) for l in labels[1:]):
        logits = stack(outs).mean(axis=0)
        return softmax_cross_entropy(logits, labels[0]), logits.data, labels[0]
    losses = [softmax_cross_entropy(o, l) for o, l in zip(outs, labels)]
    total = losses[0]
    for l in losses[1:]:
        total = total + l
    return total * (1.0 / len(losses)), outs[0].data, labels[0]


def _train_multitask(model, tasks, config, families, descriptor_for, augment_for):
    heads = {t.name: TaskHead.zeros(model.feature_dim, t.head_size, t.name) for t in tasks}
    params = dict(model.params())
    for name, head in heads.items():
        params[f"head.{name}.weight"] = head.weight
    head_names = frozenset(f"head.{t.name}.weight" for t in tasks)
    state = AdamState(weight_decay=config.weight_decay,
                      decay_names=head_names if config.decay_heads_only else None)
    steps_per_epoch = max(math.ceil(len(t.dataset) / config.batch_size) for t in tasks)
    schedule = config.lr_schedule(steps_per_epoch)
    history = []
    step = 0
    for epoch in range(config.epochs):
        plans = {}
        for t in tasks:
            chunks = epoch_batches(len(t.dataset), config.batch_size, stream(config.seed, "epoch", epoch, t.name))
            plans[t.name] = [chunks[k % len(chunks)] for k in range(steps_per_epoch)]
        sums = {t.name: [0.0, 0, 0] for t in tasks}
        for k in range(steps_per_epoch):
            losses = []
            for t in tasks:
                batch = t.dataset.batch(plans[t.name][k])
                if augment_for(t):
                    rng = stream(config.seed, "augment", step, t.name)
                    batches = apply_descriptor_augmentation(batch, augment_for(t), families, rng, config.m)
                else:
                    batches = [batch]
                loss, logits, labels = task_loss(model, heads[t.name], descriptor_for(t), batches, t.label_field)
                if not np.isfinite(loss.data):
                    raise TrainingDiverged(f"non-finite loss on task {t.name!r} at epoch {epoch}, step {k}")
                losses.append(loss)
                s = sums[t.name]
                s[0] += float(loss.data) * len(labels)
                s[1] += int(np.sum(np.argmax(logits, axis=1) == labels))
                s[2] += len(labels)
            total = losses[0]
            for l in losses[1:]:
                total = total + l
            total = total * (1.0 / len(losses))
            for p in params.values():
                p.grad = None
            backward(total)
            grads = {n: p.grad for n, p in params.items() if p.grad is not None}
            if config.grad_clip:
                clip_grad_norm(grads, config.grad_clip)
            bad = [n for n, g in grads.items() if not np.all(np.isfinite(g))]
            if bad:
                names = ", ".join(repr(t.name) for t in tasks)
                raise TrainingDiverged(f"non-finite gradient in {bad[0]!r} at epoch {epoch}, step {k} (tasks {names})")
            adam_step(params, grads, state, schedule_lr(schedule, step))
            step += 1
        for t in tasks:
            loss_sum, correct, count = sums[t.name]
            history.append({"epoch": epoch, "task": t.name, "split": "train",
                            "loss": loss_sum / count, "accuracy": correct / count})
        log.info("epoch %d: %s", epoch, {t.name: round(sums[t.name][0] / sums[t.name][2], 4) for t in tasks})
    return heads, history


def pretrain_multitask(tasks, config=PRETRAIN, arch=SYNTHETIC_ARCH, hidden=40, activation="relu",
                       families=SYNTHETIC_FAMILIES, augment=True):
    """Jointly fit the hypernetwork and one head per task (descriptors fixed per task)."""
    shapes = {t.dataset.base.shape[1:] for t in tasks}
    if len(shapes) != 1:
        raise ValueError(f"tasks disagree on image shape: {shapes}")
    for t in tasks:
        if not set(np.unique(t.descriptor)) <= {0.0, 1.0}:
            raise ValueError(f"pre-training descriptors must be binary, task {t.name!r} has {t.descriptor}")
    model = HyperEncoder(arch, len(families), hidden, activation, rng=stream(config.seed, "init", "hyper"))
    heads, history = _train_multitask(
        model, tasks, config, families,
        descriptor_for=lambda t: np.asarray(t.descriptor, dtype=np.float64),
        augment_for=lambda t: t.descriptor if augment and any(t.descriptor) else None,
    )
    return PretrainedBundle(model, heads, [t.info() for t in tasks], history,
                            {"train": config.to_dict(), "kind": "hyper", "augment": augment})


def train_mtl_baseline(tasks, config=PRETRAIN, arch=SYNTHETIC_ARCH, families=SYNTHETIC_FAMILIES, augment=True):
    """Shared plain encoder, every task augmented with the union of all task augmentations."""
    model = PlainEncoder(arch, rng=stream(config.seed, "init", "plain"))
    union = tuple(float(any(t.descriptor[k] for t in tasks)) for k in range(len(families)))
    heads, history = _train_multitask(
        model, tasks, config, families,
        descriptor_for=lambda t: None,
        augment_for=lambda t: union if augment and any(union) else None,
    )
    return PretrainedBundle(model, heads, [t.info() for t in tasks], history,
                            {"train": config.to_dict(), "kind": "plain", "augment": augment,
                             "augmentation_union": list(union)})
