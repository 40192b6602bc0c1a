"""Neural-network ops on top of the autodiff tape."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor, concat, make_op, matmul, mul, sum_

log = logging.getLogger(__name__)


def conv_output_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def im2col(x, k, stride, padding):
    """[B,C,H,W] -> ([B*H'*W', C*k*k], H', W')."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    B, C, Ho, Wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * k * k)
    return cols, Ho, Wo


def conv2d(input, kernel, bias=None, stride=1, padding=0, cols=None):
    """Cross-correlation of ``input`` [B,C,H,W] with ``kernel`` [F,C,k,k].

    ``kernel`` may be any tensor in the graph (e.g. a generated weight).
    ``cols`` lets a caller reuse a precomputed :func:`im2col` of a fixed input.
    """
    input, kernel = as_tensor(input), as_tensor(kernel)
    if input.ndim != 4 or kernel.ndim != 4:
        raise ValueError(f"conv2d expects 4-d input and kernel, got {input.shape} and {kernel.shape}")
    B, C, H, W = input.shape
    F, Ck, k, k2 = kernel.shape
    if C != Ck:
        raise ValueError(f"conv2d channel mismatch: input {input.shape} vs kernel {kernel.shape}")
    if k != k2:
        raise ValueError(f"conv2d needs square kernels, got {kernel.shape}")
    if k > H + 2 * padding or k > W + 2 * padding:
        raise ValueError(f"kernel {kernel.shape} larger than padded input {input.shape} (padding={padding})")
    if cols is None:
        cols, Ho, Wo = im2col(input.data, k, stride, padding)
    else:
        Ho, Wo = conv_output_size(H, k, stride, padding), conv_output_size(W, k, stride, padding)
    kmat = kernel.data.reshape(F, -1)
    out = (cols @ kmat.T).reshape(B, Ho, Wo, F).transpose(0, 3, 1, 2)
    parents = [input, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def bw(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, F)
        gk = (gm.T @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if input.requires_grad:
            dcols = (gm @ kmat).reshape(B, Ho, Wo, C, k, k)
            gpad = np.zeros((B, C, H + 2 * padding, W + 2 * padding))
            for i in range(k):
                for j in range(k):
                    gpad[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += (
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            gx = gpad[:, :, padding:padding + H, padding:padding + W]
        grads = [gx, gk]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make_op(np.ascontiguousarray(out), tuple(parents), bw)


@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, channels):
        return cls(np.zeros(channels), np.ones(channels))


def batchnorm2d(input, gamma, beta, running, mode="train", momentum=0.1, epsilon=1e-5):
    """Per-channel batch normalization over (B, H, W).

    Train mode normalizes with biased batch statistics and updates ``running``
    in place (unbiased variance); eval mode reads ``running`` only.
    """
    input, gamma, beta = as_tensor(input), as_tensor(gamma), as_tensor(beta)
    x = input.data
    B, C, H, W = x.shape
    if B == 0:
        raise ValueError("batchnorm2d received an empty batch")
    g4 = gamma.data[None, :, None, None]
    b4 = beta.data[None, :, None, None]
    if mode == "eval":
        inv = 1.0 / np.sqrt(running.var + epsilon)
        xhat = (x - running.mean[None, :, None, None]) * inv[None, :, None, None]

        def bw(g):
            gx = g * (g4 * inv[None, :, None, None])
            return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

        return make_op(xhat * g4 + b4, (input, gamma, beta), bw)
    if mode != "train":
        raise ValueError(f"unknown batchnorm mode {mode!r}")
    count = B * H * W
    if count < 2:
        raise ValueError(f"train-mode batchnorm needs at least 2 values per channel, got {count}")
    mu = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(var + epsilon)
    xhat = (x - mu[None, :, None, None]) * inv[None, :, None, None]
    running.mean = (1.0 - momentum) * running.mean + momentum * mu
    running.var = (1.0 - momentum) * running.var + momentum * var * count / (count - 1)

    def bw(g):
        gxhat = g * g4
        m1 = gxhat.mean(axis=(0, 2, 3), keepdims=True)
        m2 = (gxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        gx = inv[None, :, None, None] * (gxhat - m1 - xhat * m2)
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return make_op(xhat * g4 + b4, (input, gamma, beta), bw)


def linear(input, weight, bias=None):
    out = matmul(input, weight)
    return out if bias is None else out + bias


def flatten(x):
    return x.reshape(x.shape[0], -1)


def log_softmax(logits):
    logits = as_tensor(logits)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    soft = np.exp(out)

    def bw(g):
        return (g - soft * g.sum(axis=1, keepdims=True),)

    return make_op(out, (logits,), bw)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    B, O = logits.shape
    if labels.shape != (B,):
        raise ValueError(f"expected {B} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= O):
        bad = labels[(labels < 0) | (labels >= O)][0]
        raise IndexError(f"label {bad} out of range for {O} classes")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    nll = lse - z[np.arange(B), labels]
    loss = max(nll.mean(), 0.0)

    def bw(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(B), labels] -= 1.0
        return (g * p / B,)

    return make_op(np.asarray(loss), (logits,), bw)


def cosine_similarity(a, b):
    """⟨a,b⟩/(‖a‖‖b‖) for 1-d tensors; two zero vectors give 0."""
    a, b = as_tensor(a), as_tensor(b)
    na, nb = np.linalg.norm(a.data), np.linalg.norm(b.data)
    if na == 0 and nb == 0:
        log.warning("cosine_similarity of two zero vectors; returning 0")
        return Tensor(0.0)
    if na == 0 or nb == 0:
        return Tensor(0.0)
    dot = float(a.data @ b.data)
    out = np.clip(dot / (na * nb), -1.0, 1.0)

    def bw(g):
        ga = g * (b.data / (na * nb) - dot * a.data / (na ** 3 * nb))
        gb = g * (a.data / (na * nb) - dot * b.data / (nb ** 3 * na))
        return ga, gb

    return make_op(np.asarray(out), (a, b), bw)


def batch_cosine_similarity(a, b):
    """Row-wise cosine similarity of two [N,D] arrays (no autodiff)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    dots = np.einsum("ij,ij->i", a, b)
    denom = na * nb
    out = np.zeros(len(a))
    ok = denom > 0
    out[ok] = dots[ok] / denom[ok]
    if np.any((na == 0) & (nb == 0)):
        log.warning("batch_cosine_similarity saw pairs of zero vectors; scored as 0")
    return np.clip(out, -1.0, 1.0)


def l2_normalize_rows(x, eps=1e-12):
    x = as_tensor(x)
    norms = (sum_(mul(x, x), axis=1, keepdims=True) + eps) ** 0.5
    return x / norms


def nt_xent_loss(z1, z2, temperature=0.5):
    """Normalized-temperature cross entropy over two views of B items.

    Rows of the 2B×2B cosine-similarity matrix are softmaxed with the
    diagonal removed; the positive for row r is its other view.
    """
    z1, z2 = as_tensor(z1), as_tensor(z2)
    if z1.shape != z2.shape:
        raise ValueError(f"views disagree in shape: {z1.shape} vs {z2.shape}")
    B = z1.shape[0]
    if B < 2:
        raise ValueError("nt_xent_loss needs a batch of at least 2 (no negatives otherwise)")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = l2_normalize_rows(concat([z1, z2], axis=0))
    sim = matmul(z, z.T) * (1.0 / temperature)
    mask = np.zeros((2 * B, 2 * B))
    np.fill_diagonal(mask, -1e30)
    targets = np.concatenate([np.arange(B, 2 * B), np.arange(B)])
    return softmax_cross_entropy(sim + mask, targets)
