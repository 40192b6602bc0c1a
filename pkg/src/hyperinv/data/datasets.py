"""Colored-rotated datasets with per-factor labels.

A dataset keeps the unrotated grayscale source images next to the factor
labels, so any example can be re-rendered with a different angle or color.
That is how rotation and color augmentations are realised (see
:mod:`hyperinv.data.augment`).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..rng import stream
from .glyphs import synth_glyph_dataset
from .idx import load_idx_images, load_idx_labels
from .transforms import ANGLES, colorize, rotate_batch

LABEL_FIELDS = ("digit", "rotation", "color")
N_CLASSES = {"digit": 10, "rotation": len(ANGLES), "color": 3}
DATA_DIR_ENV = "HYPERINV_DATA_DIR"


def render(base, rotation, color):
    """Rotate grayscale ``base`` [B,1,H,W] by the labelled angles, then colorize."""
    base = np.asarray(base, dtype=np.float64)
    rotation = np.asarray(rotation, dtype=np.int64)
    angles = -90.0 + 30.0 * rotation
    out = base.copy()
    moved = angles != 0
    if np.any(moved):
        out[moved] = rotate_batch(base[moved], angles[moved])
    return colorize(out, np.asarray(color, dtype=np.int64))


@dataclass
class ImageBatch:
    """Rendered images plus, when known, the factors that generated them."""

    images: np.ndarray
    labels: dict
    base: np.ndarray | None = None

    def __len__(self):
        return len(self.images)

    def label(self, name):
        return self.labels[name]

    @property
    def has_factors(self):
        return self.base is not None

    def rerender(self, rotation=None, color=None):
        if self.base is None:
            raise ValueError("batch has no factor information to re-render from")
        labels = dict(self.labels)
        if rotation is not None:
            labels["rotation"] = np.asarray(rotation, dtype=np.int64)
        if color is not None:
            labels["color"] = np.asarray(color, dtype=np.int64)
        return ImageBatch(render(self.base, labels["rotation"], labels["color"]), labels, self.base)


@dataclass
class LabeledDataset:
    base: np.ndarray  # [N,1,H,W] unrotated grayscale
    digit: np.ndarray
    rotation: np.ndarray
    color: np.ndarray
    source: str = "synthetic-glyph"
    seed: int = 0
    split: str = "train"
    parent: dict | None = None
    _images: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.base)
        for name in LABEL_FIELDS:
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.shape != (n,):
                raise ValueError(f"{name} labels have shape {arr.shape}, expected ({n},)")
            setattr(self, name, arr)

    def __len__(self):
        return len(self.base)

    @property
    def images(self):
        if self._images is None:
            self._images = render(self.base, self.rotation, self.color)
        return self._images

    def labels(self, name):
        if name not in LABEL_FIELDS:
            raise KeyError(f"unknown label field {name!r}; expected one of {LABEL_FIELDS}")
        return getattr(self, name)

    def batch(self, index):
        index = np.asarray(index)
        labels = {name: getattr(self, name)[index] for name in LABEL_FIELDS}
        return ImageBatch(self.images[index], labels, self.base[index])

    def subset(self, index, split=None, note=None):
        index = np.asarray(index, dtype=np.int64)
        images = None if self._images is None else self._images[index]
        return LabeledDataset(
            self.base[index], self.digit[index], self.rotation[index], self.color[index],
            source=self.source, seed=self.seed, split=split or self.split,
            parent={"source": self.source, "seed": self.seed, "split": self.split, "size": len(self),
                    **({"note": note} if note else {})},
            _images=images,
        )

    def class_counts(self, name):
        counts = np.bincount(self.labels(name), minlength=N_CLASSES[name])
        return {int(k): int(v) for k, v in enumerate(counts)}

    def manifest(self):
        return {
            "source": self.source,
            "seed": int(self.seed),
            "split": self.split,
            "size": len(self),
            "class_counts": {name: self.class_counts(name) for name in LABEL_FIELDS},
            "parent": self.parent,
        }

    def write_manifest(self, path):
        Path(path).write_text(json.dumps(self.manifest(), indent=2))


def build_colored_rotated(base, labels, seed, source="synthetic-glyph", split="train"):
    """Give each image a uniform angle from the 7-angle set and a uniform RGB channel."""
    base = np.asarray(base, dtype=np.float64)
    rng = stream(seed, "colored-rotated", source, split)
    rotation = rng.integers(0, len(ANGLES), len(base))
    color = rng.integers(0, 3, len(base))
    return LabeledDataset(base, labels, rotation, color, source=source, seed=seed, split=split)


def subsample_per_class(dataset, n_per_class, label_field, seed):
    """Exactly ``n_per_class`` examples of every class, drawn without replacement."""
    labels = dataset.labels(label_field)
    rng = stream(seed, "subsample", label_field, n_per_class)
    picks = []
    for cls in range(N_CLASSES[label_field]):
        members = np.flatnonzero(labels == cls)
        if len(members) < n_per_class:
            raise ValueError(
                f"class {cls} of {label_field!r} has only {len(members)} examples, need {n_per_class}"
            )
        picks.append(np.sort(rng.choice(members, n_per_class, replace=False)))
    index = np.concatenate(picks)
    return dataset.subset(index, note=f"{n_per_class} per {label_field} class, seed {seed}")


def glyph_splits(alphabet, n_train_per_class, n_test_per_class, seed):
    """Disjoint train/test colored-rotated glyph datasets for one alphabet."""
    base, labels = synth_glyph_dataset(n_train_per_class + n_test_per_class, seed, alphabet)
    cut = n_train_per_class * 10
    source = f"synthetic-glyph:{alphabet}"
    train = build_colored_rotated(base[:cut], labels[:cut], seed, source=source, split="train")
    test = build_colored_rotated(base[cut:], labels[cut:], seed, source=source, split="test")
    return train, test


IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def expected_idx_paths(name, data_dir=None):
    root = Path(data_dir or os.environ.get(DATA_DIR_ENV, "data")) / name
    return {split: tuple(root / f for f in files) for split, files in IDX_FILES.items()}


def idx_splits(name, seed, data_dir=None, limit=None):
    """Colored-rotated train/test datasets from ``<data_dir>/<name>/`` IDX files."""
    paths = expected_idx_paths(name, data_dir)
    missing = [str(p) for pair in paths.values() for p in pair if not p.exists()]
    if missing:
        raise FileNotFoundError(
            f"{name} IDX files not found; expected:\n  " + "\n  ".join(missing)
            + f"\n(set {DATA_DIR_ENV} or choose the glyph source)"
        )
    out = []
    for split in ("train", "test"):
        img_path, lbl_path = paths[split]
        images, labels = load_idx_images(img_path), load_idx_labels(lbl_path)
        if limit:
            images, labels = images[:limit], labels[:limit]
        out.append(build_colored_rotated(images, labels, seed, source=name, split=split))
    return tuple(out)
