"""Image transforms on numpy arrays laid out as [..., C, H, W] in [0, 1].

Rotation and colorization build the colored-rotated digits. Ventral
(crop/flip) and dorsal (grayscale/jitter/blur) families build contrastive
views.
"""
from __future__ import annotations

import numpy as np

ANGLES = (-90, -60, -30, 0, 30, 60, 90)


def angle_of(rotation_label):
    return -90 + 30 * int(rotation_label)


def _bilinear(images, rows, cols):
    """Sample ``images`` [B,C,H,W] at fractional (rows, cols) [B,H',W'], zero outside."""
    B, C, H, W = images.shape
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = rows - r0
    fc = cols - c0
    out = np.zeros((B, C) + rows.shape[1:])
    bidx = np.arange(B)[:, None, None]
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            rr, cc = r0 + dr, c0 + dc
            ok = (rr >= 0) & (rr < H) & (cc >= 0) & (cc < W)
            w = np.where(ok, wr * wc, 0.0)
            vals = images[bidx, :, np.clip(rr, 0, H - 1), np.clip(cc, 0, W - 1)]  # [B,H',W',C]
            out += np.moveaxis(vals, -1, 1) * w[:, None]
    return out


def _cos_sin(angle):
    if angle % 90 == 0:
        quarter = int(angle // 90) % 4
        return ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))[quarter]
    rad = np.deg2rad(angle)
    return np.cos(rad), np.sin(rad)


def rotate_batch(images, angles):
    """Rotate each image counter-clockwise by its angle (degrees) about the center."""
    images = np.asarray(images, dtype=np.float64)
    B, C, H, W = images.shape
    angles = np.broadcast_to(np.asarray(angles, dtype=np.float64), (B,))
    if np.any(np.abs(angles) > 180):
        raise ValueError("rotation angles must lie in [-180, 180]")
    cs = np.array([_cos_sin(a) for a in angles])
    cos, sin = cs[:, 0, None, None], cs[:, 1, None, None]
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    x = cc - cx
    y = cy - rr
    xs = x * cos + y * sin
    ys = -x * sin + y * cos
    return _bilinear(images, cy - ys, cx + xs)


def rotate_image(image, angle_degrees):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ValueError(f"rotate_image expects [C,H,W], got {image.shape}")
    if angle_degrees == 0:
        return image.copy()
    return rotate_batch(image[None], [angle_degrees])[0]


def colorize(image, channel):
    """Place a grayscale [1,H,W] (or [B,1,H,W]) image into one RGB channel."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape[-3] != 1:
        raise ValueError(f"colorize expects a single-channel image, got {image.shape}")
    channel = np.asarray(channel)
    if np.any((channel < 0) | (channel > 2)):
        raise ValueError(f"color channel must be in [0, 3), got {channel}")
    if image.ndim == 3:
        out = np.zeros((3,) + image.shape[1:])
        out[int(channel)] = image[0]
        return out
    out = np.zeros((image.shape[0], 3) + image.shape[2:])
    out[np.arange(image.shape[0]), np.broadcast_to(channel, (image.shape[0],))] = image[:, 0]
    return out


# -- ventral: spatial ---------------------------------------------------------

def resized_crop(images, top, left, height, width, out_size=None):
    """Crop boxes (per image, fractional pixels) resized back to ``out_size`` by bilinear sampling."""
    B, C, H, W = images.shape
    Ho, Wo = out_size or (H, W)
    top, left = np.asarray(top, float)[:, None, None], np.asarray(left, float)[:, None, None]
    height, width = np.asarray(height, float)[:, None, None], np.asarray(width, float)[:, None, None]
    r = np.arange(Ho, dtype=np.float64)[None, :, None]
    c = np.arange(Wo, dtype=np.float64)[None, None, :]
    rows = top + (r + 0.5) * height / Ho - 0.5
    cols = left + (c + 0.5) * width / Wo - 0.5
    rows, cols = np.broadcast_arrays(rows, cols)
    return _bilinear(images, rows, cols)


def ventral(images, rng, scale=(0.5, 1.0), ratio=(3 / 4, 4 / 3), flip_p=0.5):
    """Random resized crop then random horizontal flip."""
    images = np.asarray(images, dtype=np.float64)
    B, C, H, W = images.shape
    area = rng.uniform(scale[0], scale[1], B) * H * W
    log_ratio = rng.uniform(np.log(ratio[0]), np.log(ratio[1]), B)
    aspect = np.exp(log_ratio)
    width = np.minimum(np.sqrt(area * aspect), W)
    height = np.minimum(np.sqrt(area / aspect), H)
    top = rng.uniform(0, 1, B) * (H - height)
    left = rng.uniform(0, 1, B) * (W - width)
    flip = rng.uniform(0, 1, B) < flip_p
    exact = (height == H) & (width == W)
    out = images.copy()
    if not np.all(exact):
        idx = np.flatnonzero(~exact)
        out[idx] = resized_crop(images[idx], top[idx], left[idx], height[idx], width[idx])
    out[flip] = out[flip][..., ::-1]
    return out


# -- dorsal: appearance -------------------------------------------------------

GAUSS3 = np.outer([1.0, 2.0, 1.0], [1.0, 2.0, 1.0]) / 16.0


def to_grayscale(images):
    lum = np.tensordot(np.array([0.299, 0.587, 0.114]), images, axes=([0], [-3]))
    return np.repeat(np.expand_dims(lum, -3), 3, axis=-3)


def blur3(images):
    """Fixed 3x3 Gaussian blur with edge replication."""
    H, W = images.shape[-2:]
    p = np.pad(images, [(0, 0)] * (images.ndim - 2) + [(1, 1), (1, 1)], mode="edge")
    out = np.zeros_like(images)
    for i in range(3):
        for j in range(3):
            out += GAUSS3[i, j] * p[..., i:i + H, j:j + W]
    return out


def _hue_matrix(theta):
    """Rotation about the gray axis of RGB space."""
    c, s = np.cos(theta), np.sin(theta)
    k = 1.0 / 3.0
    r = np.sqrt(k)
    return np.array([
        [c + (1 - c) * k, k * (1 - c) - r * s, k * (1 - c) + r * s],
        [k * (1 - c) + r * s, c + (1 - c) * k, k * (1 - c) - r * s],
        [k * (1 - c) - r * s, k * (1 - c) + r * s, c + (1 - c) * k],
    ])


def dorsal(images, rng, gray_p=0.3, brightness=0.4, contrast=0.4, saturation=0.4, hue=0.3, blur_p=0.5):
    """Random grayscale, color jitter and Gaussian blur; never moves pixels."""
    images = np.asarray(images, dtype=np.float64)
    B = images.shape[0]
    b = rng.uniform(1 - brightness, 1 + brightness, B)[:, None, None, None]
    c = rng.uniform(1 - contrast, 1 + contrast, B)[:, None, None, None]
    s = rng.uniform(1 - saturation, 1 + saturation, B)[:, None, None, None]
    h = rng.uniform(-hue, hue, B) * np.pi
    gray = rng.uniform(0, 1, B) < gray_p
    blur = rng.uniform(0, 1, B) < blur_p
    out = images * b
    mean = out.mean(axis=(1, 2, 3), keepdims=True)
    out = (out - mean) * c + mean
    g = to_grayscale(out)
    out = g + (out - g) * s
    out = np.einsum("bij,bjhw->bihw", np.stack([_hue_matrix(t) for t in h]), out)
    out = np.clip(out, 0.0, 1.0)
    out[gray] = to_grayscale(out[gray])
    out[blur] = blur3(out[blur])
    return out


def default_view(images, rng, ventral_kw=None, dorsal_kw=None):
    return dorsal(ventral(images, rng, **(ventral_kw or {})), rng, **(dorsal_kw or {}))


VIEW_FAMILIES = {"ventral": ventral, "dorsal": dorsal, "default": default_view}


def make_views(images, family, rng, **kwargs):
    """Two independently augmented views of every image."""
    try:
        fn = VIEW_FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown view family {family!r}; expected one of {sorted(VIEW_FAMILIES)}") from None
    return fn(images, rng, **kwargs), fn(images, rng, **kwargs)
