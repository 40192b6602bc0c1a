"""Procedural stroke glyphs: a network-free stand-in for MNIST and KMNIST.

Two alphabets of ten classes each. ``"source"`` plays the pre-training
digits, ``"target"`` the shifted downstream domain. No glyph is symmetric
under a half turn, so every angle in the rotation set stays identifiable.
Each draw applies a random affine jitter, per-vertex noise and a random
stroke width.
"""
from __future__ import annotations

import numpy as np

from ..rng import stream

# polylines in a [-1, 1] box, y pointing up
ALPHABETS = {
    "source": [
        [[(-0.5, -1), (-0.5, 1), (0.6, 1)], [(-0.5, 0.1), (0.3, 0.1)]],  # F
        [[(-0.5, 1), (-0.5, -1), (0.6, -1)]],  # L
        [[(-0.5, -1), (-0.5, 1), (0.3, 1), (0.6, 0.6), (0.3, 0.2), (-0.5, 0.2)]],  # P
        [[(-0.6, 1), (0.6, 1), (-0.1, -1)]],  # 7
        [[(0.3, 1), (0.3, -0.6), (0.0, -1), (-0.4, -0.85), (-0.5, -0.5)]],  # J
        [[(0.3, -1), (0.3, 1), (-0.6, -0.2), (0.6, -0.2)]],  # 4
        [[(-0.7, 1), (0.7, 1)], [(0, 1), (0, -1)]],  # T
        [[(-0.5, 1), (-0.5, -1)], [(-0.5, 0.1), (0.1, 0.4), (0.5, 0.1), (0.5, -1)]],  # h
        [[(-0.7, 0), (-0.3, -0.8), (0.7, 1)]],  # check mark
        [[(-0.6, 0.6), (-0.2, 1), (0.4, 1), (0.6, 0.6), (-0.6, -1), (0.6, -1)]],  # 2
    ],
    "target": [
        [[(-0.5, 1), (-0.5, -1)], [(0.5, 0.6), (-0.5, -0.1), (0.5, -1)]],  # k
        [[(-0.5, 1), (0, 0)], [(0.5, 1), (-0.4, -1)]],  # y
        [[(0.6, 0.7), (0.2, 1), (-0.3, 1), (-0.6, 0.5), (-0.6, -0.5), (-0.3, -1), (0.3, -1), (0.6, -0.5),
          (0.6, 0), (0.1, 0)]],  # G
        [[(-0.5, 1), (-0.5, -1), (0.3, -1), (0.6, -0.6), (0.3, -0.2), (-0.5, -0.2)]],  # b
        [[(0, -1), (0, 1)], [(-0.5, 0.5), (0, 1), (0.5, 0.5)], [(0, -1), (0.5, -1)]],  # arrow with foot
        [[(0.6, 1), (-0.5, 1), (-0.5, -1), (0.6, -1)], [(-0.5, 0), (0.2, 0)]],  # E
        [[(-0.6, 1), (0.6, -1)], [(0, 0), (-0.6, -1)]],  # lambda
        [[(-0.4, 0.6), (-0.4, -1)], [(-0.4, 0.2), (0, 0.6), (0.5, 0.6)]],  # r
        [[(0.5, 1), (0.5, -1), (-0.3, -1), (-0.6, -0.6), (-0.3, -0.2), (0.5, -0.2)]],  # d
        [[(0, -1), (0, 0.1), (-0.6, 1)], [(0, 0.1), (0.6, 1)], [(-0.4, -1), (0, -1)]],  # Y with foot
    ],
}

SIZE = 28
PIXELS_PER_UNIT = 9.0


def _segment_distance(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / np.where(denom == 0, 1.0, denom), 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def render_glyph(strokes, rng, size=SIZE):
    """Draw one jittered glyph as a [size,size] array in [0,1]."""
    angle = np.deg2rad(rng.uniform(-6, 6))
    scale = rng.uniform(0.85, 1.1)
    shear = rng.uniform(-0.15, 0.15)
    shift = rng.uniform(-1.5, 1.5, 2)
    width = rng.uniform(1.0, 2.0)
    c, s = np.cos(angle), np.sin(angle)
    A = scale * PIXELS_PER_UNIT * np.array([[c, -s], [s, c]]) @ np.array([[1.0, shear], [0.0, 1.0]])
    center = (size - 1) / 2.0
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    px, py = cols - center, center - rows
    dist = np.full((size, size), np.inf)
    for line in strokes:
        pts = np.asarray(line, dtype=np.float64)
        pts = pts + rng.normal(0.0, 0.05, pts.shape)
        pts = pts @ A.T + shift
        for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
            dist = np.minimum(dist, _segment_distance(px, py, ax, ay, bx, by))
    return np.clip(width / 2.0 + 0.5 - dist, 0.0, 1.0)


def synth_glyph_dataset(n_per_class, seed, alphabet="source"):
    """(images [N,1,28,28], labels [N]) with classes interleaved 0..9,0..9,..."""
    strokes = ALPHABETS[alphabet]
    n_classes = len(strokes)
    images = np.zeros((n_per_class * n_classes, 1, SIZE, SIZE))
    labels = np.tile(np.arange(n_classes), n_per_class)
    for k, label in enumerate(labels):
        rng = stream(seed, "glyph", alphabet, k)
        images[k, 0] = render_glyph(strokes[label], rng)
    return images, labels
