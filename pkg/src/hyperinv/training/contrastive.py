"""Toy-scale contrastive pre-training of a hypernetwork encoder.

Each step picks the next descriptor from the cycle [1,1] -> [1,0] -> [0,1]
(component order: ventral, dorsal), builds two views of the batch with the
matching augmentation family, and minimizes NT-Xent on projected features.
The projection MLP is dropped from the returned bundle.
"""
from __future__ import annotations

import logging
import math

import numpy as np

from ..data import make_views
from ..hypernet import TOY_CONTRASTIVE_ARCH, HyperEncoder
from ..numerics import AdamState, Tensor, adam_step, backward, clip_grad_norm, linear, nt_xent_loss, relu
from ..numerics import schedule_lr
from ..rng import stream
from .bundle import PretrainedBundle
from .config import CONTRASTIVE
from .multitask import TrainingDiverged, epoch_batches

log = logging.getLogger(__name__)

# descriptor -> view family, in cycle order
CONTRASTIVE_CYCLE = (
    ((1.0, 1.0), "default"),
    ((1.0, 0.0), "ventral"),
    ((0.0, 1.0), "dorsal"),
)


class ProjectionHead:
    def __init__(self, in_dim, hidden=64, out_dim=32, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w1 = Tensor(rng.normal(0, 1 / np.sqrt(in_dim), (in_dim, hidden)), requires_grad=True)
        self.w2 = Tensor(rng.normal(0, 1 / np.sqrt(hidden), (hidden, out_dim)), requires_grad=True)

    def params(self):
        return {"proj.w1": self.w1, "proj.w2": self.w2}

    def __call__(self, h):
        return linear(relu(linear(h, self.w1)), self.w2)


def pretrain_contrastive(images, config=CONTRASTIVE, arch=TOY_CONTRASTIVE_ARCH, hidden=40, activation="relu",
                         cycle=CONTRASTIVE_CYCLE, temperature=0.5, proj_hidden=64, proj_dim=32):
    """Hypernetwork encoder trained with NT-Xent across the descriptor cycle."""
    images = np.asarray(images, dtype=np.float64)
    if config.batch_size < 2:
        raise ValueError("contrastive pre-training needs batch_size >= 2")
    n = len(images)
    if n < 2:
        raise ValueError("contrastive pre-training needs at least 2 images")
    K = len(cycle[0][0])
    model = HyperEncoder(arch, K, hidden, activation, rng=stream(config.seed, "init", "hyper"))
    proj = ProjectionHead(model.feature_dim, proj_hidden, proj_dim, rng=stream(config.seed, "init", "projection"))
    params = {**model.params(), **proj.params()}
    state = AdamState(weight_decay=config.weight_decay)
    batches_per_epoch = math.ceil(n / config.batch_size)
    schedule = config.lr_schedule(batches_per_epoch)
    history, step = [], 0
    for epoch in range(config.epochs):
        sums = {fam: [0.0, 0] for _, fam in cycle}
        for idx in epoch_batches(n, config.batch_size, stream(config.seed, "epoch", epoch)):
            if len(idx) < 2:
                continue
            descriptor, family = cycle[step % len(cycle)]
            v1, v2 = make_views(images[idx], family, stream(config.seed, "views", step))
            d = np.asarray(descriptor)
            z1 = proj(model.features(d, v1, mode="train"))
            z2 = proj(model.features(d, v2, mode="train"))
            loss = nt_xent_loss(z1, z2, temperature)
            if not np.isfinite(loss.data):
                raise TrainingDiverged(f"non-finite contrastive loss for {family!r} views at epoch {epoch}")
            for p in params.values():
                p.grad = None
            backward(loss)
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            if config.grad_clip:
                clip_grad_norm(grads, config.grad_clip)
            adam_step(params, grads, state, schedule_lr(schedule, step))
            sums[family][0] += float(loss.data) * len(idx)
            sums[family][1] += len(idx)
            step += 1
        for family, (total, count) in sums.items():
            if count:
                history.append({"epoch": epoch, "task": f"contrastive-{family}", "split": "train",
                                "loss": total / count, "accuracy": float("nan")})
        log.info("epoch %d: %s", epoch, {f: round(s[0] / max(s[1], 1), 4) for f, s in sums.items()})
    tasks = [{"name": f"contrastive-{fam}", "label_field": None, "descriptor": list(desc), "head_size": 0}
             for desc, fam in cycle]
    return PretrainedBundle(model, {}, tasks, history,
                            {"train": config.to_dict(), "kind": "hyper", "objective": "nt-xent",
                             "temperature": temperature})
