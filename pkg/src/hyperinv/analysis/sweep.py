"""Converged downstream train loss as a function of a pinned descriptor."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..training.config import DOWNSTREAM
from ..training.downstream import evaluate_features, features_of, fit_head


@dataclass
class LossPoint:
    t: float
    descriptor: list
    loss: float  # mean train loss over the final epoch
    accuracy: float


def loss_descriptor_sweep(bundle, data, label_field, head_size, sweep, config=DOWNSTREAM, ts=None):
    """Fresh head per pinned descriptor; identical budget and seed at every point."""
    model = bundle.frozen_model()
    labels = data.labels(label_field)
    ts = np.arange(len(sweep), dtype=np.float64) if ts is None else ts
    out = []
    for t, d in zip(ts, sweep):
        d = np.asarray(d, dtype=np.float64)
        feats = features_of(model, d, data.images)
        head, history = fit_head(feats, labels, head_size, config, tag="discrete")
        acc = evaluate_features(head, feats, labels)["accuracy"]
        out.append(LossPoint(float(t), d.tolist(), float(history[-1]), acc))
    return out
