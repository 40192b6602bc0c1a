"""Measured invariance: feature cosine similarity between images and transformed copies."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import ImageBatch
from ..numerics import batch_cosine_similarity
from ..rng import stream
from ..training.downstream import features_of


@dataclass
class SweepPoint:
    t: float  # interpolation parameter
    descriptor: list
    mean: dict  # family -> mean similarity
    std: dict  # family -> std over (image, draw) pairs
    sem: dict = field(default_factory=dict)  # family -> standard error of the mean


@dataclass
class InvarianceCurve:
    points: list
    families: list
    n_samples: int

    def series(self, family):
        return np.array([p.mean[family] for p in self.points])

    def ts(self):
        return np.array([p.t for p in self.points])

    def rows(self):
        out = []
        for p in self.points:
            row = {"t": p.t}
            row.update({f"i{k}": v for k, v in enumerate(p.descriptor)})
            for f in self.families:
                row[f"{f}_mean"] = p.mean[f]
                row[f"{f}_std"] = p.std[f]
            out.append(row)
        return out


def interpolation_sweep(n_points=11):
    """Descriptors [t, 1-t] for t evenly spaced on [0, 1]."""
    ts = np.linspace(0.0, 1.0, n_points)
    return ts, [np.array([t, 1.0 - t]) for t in ts]


def _as_batch(images):
    if isinstance(images, ImageBatch):
        return images
    if hasattr(images, "batch"):  # LabeledDataset
        return images.batch(np.arange(len(images)))
    return ImageBatch(np.asarray(images, dtype=np.float64), {}, None)


def measure_invariance(bundle, images, families, sweep=None, n_aug=1, seed=0, ts=None, batch_size=500):
    """Per-family mean cosine similarity of features before/after the family's transform.

    The same transformed images are reused for every sweep point, so curves
    differ only through the descriptor.
    """
    batch = _as_batch(images)
    if len(batch) == 0:
        raise ValueError("measure_invariance needs at least one image")
    if n_aug < 1:
        raise ValueError("n_aug must be >= 1")
    if sweep is None:
        ts, sweep = interpolation_sweep()
    sweep = [np.asarray(d, dtype=np.float64) for d in sweep]
    if ts is None:
        ts = np.arange(len(sweep), dtype=np.float64)
    model = bundle.frozen_model() if hasattr(bundle, "frozen_model") else bundle
    moved = {}
    for f in families:
        moved[f.name] = [f.apply(batch, stream(seed, "measure", f.name, a)).images for a in range(n_aug)]
    points = []
    for t, d in zip(ts, sweep):
        desc = d if getattr(model, "kind", "hyper") == "hyper" else None
        clean = features_of(model, desc, batch.images, batch_size)
        mean, std, sem = {}, {}, {}
        for f in families:
            sims = np.concatenate([
                batch_cosine_similarity(clean, features_of(model, desc, x, batch_size)) for x in moved[f.name]
            ])
            mean[f.name] = float(sims.mean())
            std[f.name] = float(sims.std())
            sem[f.name] = float(sims.std(ddof=1) / np.sqrt(len(sims))) if len(sims) > 1 else 0.0
        points.append(SweepPoint(float(t), d.tolist(), mean, std, sem))
    return InvarianceCurve(points, [f.name for f in families], len(batch) * n_aug)
