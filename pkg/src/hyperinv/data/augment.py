"""Descriptor-gated augmentation.

Each transformation family is a fixed random transform. Descriptor entry k
switches family k on (1) or leaves it as the identity (0). Rotation and
color-swap resample the corresponding generative factor and re-render the
image, so the factor labels always describe the pixels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import ImageBatch
from .transforms import ANGLES, dorsal, ventral


@dataclass(frozen=True)
class TransformFamily:
    """A named transform; ``strength`` is the probability an image is transformed (0 = identity)."""

    name: str
    strength: float = 1.0

    def apply(self, batch, rng):
        B = len(batch)
        hit = rng.uniform(0, 1, B) < self.strength
        if self.name == "rotation":
            new = np.where(hit, rng.integers(0, len(ANGLES), B), batch.label("rotation"))
            return batch.rerender(rotation=new) if np.any(hit) else batch
        if self.name == "color":
            new = np.where(hit, rng.integers(0, 3, B), batch.label("color"))
            return batch.rerender(color=new) if np.any(hit) else batch
        if self.name in ("ventral", "dorsal"):
            fn = ventral if self.name == "ventral" else dorsal
            moved = fn(batch.images, rng)
            images = np.where(hit[:, None, None, None], moved, batch.images)
            return ImageBatch(images, dict(batch.labels), None)
        raise ValueError(f"unknown transform family {self.name!r}")


ROTATION = TransformFamily("rotation")
COLOR = TransformFamily("color")
SYNTHETIC_FAMILIES = (ROTATION, COLOR)


def apply_descriptor_augmentation(batch, descriptor, families, rng, m=1):
    """``m`` augmented copies of ``batch``; family k is active iff descriptor[k] == 1."""
    descriptor = np.asarray(descriptor, dtype=np.float64)
    if len(descriptor) != len(families):
        raise ValueError(f"descriptor has {len(descriptor)} entries for {len(families)} families")
    if m < 1:
        raise ValueError("m must be a positive integer")
    out = []
    for _ in range(m):
        aug = batch
        for gate, family in zip(descriptor, families):
            if gate == 1:
                aug = family.apply(aug, rng)
        out.append(aug)
    return out
