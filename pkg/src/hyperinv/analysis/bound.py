"""Union-bound generalization guarantee over a finite set of descriptors.

risk <= empirical + 2 X B / sqrt(n) + 3 sqrt(ln(|I| / delta) / (2 n))

for a 1-Lipschitz loss bounded in [0, 1], features with norm <= X and heads
with norm <= B.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..hypernet import round_descriptor
from ..rng import stream
from ..training.config import DOWNSTREAM
from ..training.downstream import features_of, fit_head


@dataclass(frozen=True)
class BoundInputs:
    empirical_risk: float
    X: float
    B: float
    n: int
    cardinality: int
    delta: float

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.cardinality < 1:
            raise ValueError(f"|I| must be >= 1, got {self.cardinality}")
        if self.empirical_risk < 0 or self.X < 0 or self.B < 0:
            raise ValueError("empirical risk, X and B must be non-negative")


def complexity_term(X, B, n):
    return 2.0 * X * B / math.sqrt(n)


def confidence_term(cardinality, delta, n):
    return 3.0 * math.sqrt(math.log(cardinality / delta) / (2.0 * n))


def generalization_bound(inputs):
    b = inputs
    return b.empirical_risk + complexity_term(b.X, b.B, b.n) + confidence_term(b.cardinality, b.delta, b.n)


def estimate_norm_bounds(bundle, descriptor, data, head, batch_size=500):
    """(X_hat, B_hat): largest feature norm over ``data`` and the flattened head norm."""
    model = bundle.frozen_model() if hasattr(bundle, "frozen_model") else bundle
    images = data.images if hasattr(data, "images") else np.asarray(data)
    desc = None if getattr(model, "kind", "hyper") != "hyper" else descriptor
    feats = features_of(model, desc, images, batch_size)
    X = float(np.max(np.linalg.norm(feats, axis=1))) if len(feats) else 0.0
    w = head.weight.data if hasattr(head, "weight") else np.asarray(head)
    return X, float(np.linalg.norm(w))


def ramp_loss(logits, labels):
    """Multiclass ramp loss clip(1 - (z_y - max_{k!=y} z_k), 0, 1), bounded and 1-Lipschitz in the margin."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    rows = np.arange(len(labels))
    correct = logits[rows, labels]
    other = logits.copy()
    other[rows, labels] = -np.inf
    margin = correct - other.max(axis=1)
    return np.clip(1.0 - margin, 0.0, 1.0)


@dataclass
class SanityTrial:
    trial: int
    descriptor: list
    empirical_risk: float
    test_risk: float
    X: float
    B: float
    bound: float
    bound_fixed: float  # same fit, but |I| = 1 (one fixed feature extractor)
    violated: bool


def bound_sanity_check(bundle, train, test, label_field, head_size, trials=20, delta=0.05, n_per_class=10,
                       config=DOWNSTREAM, levels=2, seed=0, descriptors=None, X=None):
    """Monte Carlo check that test risk stays under the bound across independent fits.

    Each trial draws a fresh training sample, picks the discretized descriptor
    with the lowest surrogate training risk, fits a head there, and compares
    test surrogate risk with the bound. ``X`` defaults to the largest feature
    norm over train and test images at the chosen descriptor.
    """
    from ..data import subsample_per_class
    from ..hypernet import descriptor_grid

    model = bundle.frozen_model()
    K = model.n_families
    grid = descriptor_grid(K, levels) if descriptors is None else [round_descriptor(d, levels) for d in descriptors]
    card = levels ** K
    rows = []
    for t in range(trials):
        tseed = int(stream(seed, "bound-trial", t).integers(0, 2 ** 31))
        data = subsample_per_class(train, n_per_class, label_field, tseed)
        y = data.labels(label_field)
        best = None
        for d in grid:
            feats = features_of(model, d, data.images)
            head, _ = fit_head(feats, y, head_size, config.but(seed=tseed), tag="bound")
            risk = float(ramp_loss(feats @ head.weight.data, y).mean())
            if best is None or risk < best[0]:
                best = (risk, d, head, feats)
        risk, d, head, feats = best
        test_feats = features_of(model, d, test.images)
        test_risk = float(ramp_loss(test_feats @ head.weight.data, test.labels(label_field)).mean())
        Xh = X if X is not None else float(max(np.linalg.norm(feats, axis=1).max(),
                                               np.linalg.norm(test_feats, axis=1).max()))
        Bh = float(np.linalg.norm(head.weight.data))
        n = len(y)
        bound = generalization_bound(BoundInputs(risk, Xh, Bh, n, card, delta))
        fixed = generalization_bound(BoundInputs(risk, Xh, Bh, n, 1, delta))
        rows.append(SanityTrial(t, np.asarray(d).tolist(), risk, test_risk, Xh, Bh, bound, fixed, test_risk > bound))
    return {
        "delta": delta,
        "cardinality": card,
        "trials": [asdict(r) for r in rows],
        "violations": int(sum(r.violated for r in rows)),
    }
