"""Descriptor-conditioned weight generation and the encoder it drives.

A two-layer generator maps an invariance descriptor ``i`` in [0,1]^K to the
kernels of every conv layer::

    hidden  = act(i @ w1) + b1
    kernel_l = reshape(hidden @ w2_l + b2_l, [F_l, C_l, k_l, k_l])

The encoder is a stack of conv -> batchnorm -> relu blocks followed by a
flatten. BatchNorm affine parameters and running statistics are ordinary
shared parameters and are not generated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import RunningStats, Tensor, batchnorm2d, conv2d, conv_output_size, flatten, linear, relu
from .numerics import tensor as T


@dataclass(frozen=True)
class ConvLayer:
    in_ch: int
    out_ch: int
    kernel: int
    stride: int = 1
    padding: int = 0

    @property
    def weight_count(self):
        return self.out_ch * self.in_ch * self.kernel * self.kernel

    @property
    def weight_shape(self):
        return (self.out_ch, self.in_ch, self.kernel, self.kernel)


@dataclass(frozen=True)
class Architecture:
    layers: tuple
    image_shape: tuple = (3, 28, 28)

    def feature_shape(self):
        c, h, w = self.image_shape
        for layer in self.layers:
            if layer.in_ch != c:
                raise ValueError(f"layer expects {layer.in_ch} channels, previous output has {c}")
            h = conv_output_size(h, layer.kernel, layer.stride, layer.padding)
            w = conv_output_size(w, layer.kernel, layer.stride, layer.padding)
            c = layer.out_ch
        return c, h, w

    @property
    def feature_dim(self):
        return int(np.prod(self.feature_shape()))

    def to_dict(self):
        return {
            "image_shape": list(self.image_shape),
            "layers": [
                {"in_ch": l.in_ch, "out_ch": l.out_ch, "kernel": l.kernel, "stride": l.stride, "padding": l.padding}
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(ConvLayer(**l) for l in d["layers"]), tuple(d["image_shape"]))


# single 5x5 conv, 16 filters, stride 2, padding 2 -> 16*14*14 = 3136 features
SYNTHETIC_ARCH = Architecture((ConvLayer(3, 16, 5, stride=2, padding=2),))
# small multi-layer encoder for the contrastive mode
TOY_CONTRASTIVE_ARCH = Architecture((
    ConvLayer(3, 8, 5, stride=2, padding=2),
    ConvLayer(8, 16, 3, stride=2, padding=1),
))

ACTIVATIONS = {"relu": relu, "identity": lambda x: x, "sigmoid": T.sigmoid}


class SharedNorm:
    """Per-layer batchnorm parameters and running statistics."""

    def __init__(self, arch):
        self.params = {}
        self.stats = []
        for l, layer in enumerate(arch.layers):
            self.params[f"bn.{l}.gamma"] = Tensor(np.ones(layer.out_ch), requires_grad=True)
            self.params[f"bn.{l}.beta"] = Tensor(np.zeros(layer.out_ch), requires_grad=True)
            self.stats.append(RunningStats.fresh(layer.out_ch))

    def arrays(self):
        out = {k: v.data for k, v in self.params.items()}
        for l, s in enumerate(self.stats):
            out[f"bn.{l}.running_mean"] = s.mean
            out[f"bn.{l}.running_var"] = s.var
        return out

    def load(self, arrays):
        for k in self.params:
            self.params[k].data = np.array(arrays[k])
        for l, s in enumerate(self.stats):
            s.mean = np.array(arrays[f"bn.{l}.running_mean"])
            s.var = np.array(arrays[f"bn.{l}.running_var"])


def encoder_forward(kernels, norm, arch, x, mode="eval", cols=None, momentum=0.1):
    """conv -> BN -> relu per layer, then flatten. ``cols`` is an optional im2col of ``x``."""
    h = x if isinstance(x, Tensor) else Tensor(x)
    for l, (layer, kernel) in enumerate(zip(arch.layers, kernels)):
        h = conv2d(h, kernel, stride=layer.stride, padding=layer.padding, cols=cols if l == 0 else None)
        h = batchnorm2d(h, norm.params[f"bn.{l}.gamma"], norm.params[f"bn.{l}.beta"], norm.stats[l],
                        mode=mode, momentum=momentum)
        h = relu(h)
    return flatten(h)


class HyperNetworkParams:
    """Generator weights {w1, b1, w2_l, b2_l} for every conv layer of ``arch``."""

    def __init__(self, arch, n_families=2, hidden=40, activation="relu", rng=None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.arch = arch
        self.n_families = n_families
        self.hidden = hidden
        self.activation = activation
        rng = rng if rng is not None else np.random.default_rng(0)
        bound1 = 1.0 / np.sqrt(n_families)
        bound2 = 1.0 / np.sqrt(hidden)
        self.params = {
            "hyper.w1": Tensor(rng.uniform(-bound1, bound1, (n_families, hidden)), requires_grad=True),
            "hyper.b1": Tensor(rng.uniform(-bound1, bound1, hidden), requires_grad=True),
        }
        h_ones = self._hidden(Tensor(np.ones(n_families))).data
        for l, layer in enumerate(arch.layers):
            w2 = rng.uniform(-bound2, bound2, (hidden, layer.weight_count))
            fan_in = layer.in_ch * layer.kernel ** 2
            target = 1.0 / np.sqrt(3.0 * fan_in)
            got = np.std(h_ones @ w2)
            if got > 0:
                w2 *= target / got
            self.params[f"hyper.w2.{l}"] = Tensor(w2, requires_grad=True)
            self.params[f"hyper.b2.{l}"] = Tensor(np.zeros(layer.weight_count), requires_grad=True)

    def _hidden(self, i):
        return ACTIVATIONS[self.activation](i @ self.params["hyper.w1"]) + self.params["hyper.b1"]

    @property
    def output_sizes(self):
        return [layer.weight_count for layer in self.arch.layers]

    def arrays(self):
        return {k: v.data for k, v in self.params.items()}

    def load(self, arrays):
        for k in self.params:
            if arrays[k].shape != self.params[k].shape:
                raise ValueError(f"{k}: checkpoint shape {arrays[k].shape} != model shape {self.params[k].shape}")
            self.params[k].data = np.array(arrays[k])


def _descriptor_tensor(i, K):
    i = i if isinstance(i, Tensor) else Tensor(np.asarray(i, dtype=np.float64))
    if i.shape != (K,):
        raise ValueError(f"descriptor must have shape ({K},), got {i.shape}")
    return i


def hyper_forward(W, i):
    """Generated conv kernels, one [F,C,k,k] tensor per layer, differentiable in W and i."""
    i = _descriptor_tensor(i, W.n_families)
    hidden = W._hidden(i)
    out = []
    for l, layer in enumerate(W.arch.layers):
        theta = hidden @ W.params[f"hyper.w2.{l}"] + W.params[f"hyper.b2.{l}"]
        out.append(theta.reshape(layer.weight_shape))
    return out


class HyperEncoder:
    """Hypernetwork plus shared batchnorm: features depend on (descriptor, image)."""

    kind = "hyper"

    def __init__(self, arch=SYNTHETIC_ARCH, n_families=2, hidden=40, activation="relu", rng=None):
        self.arch = arch
        self.hyper = HyperNetworkParams(arch, n_families, hidden, activation, rng)
        self.norm = SharedNorm(arch)

    @property
    def n_families(self):
        return self.hyper.n_families

    @property
    def feature_dim(self):
        return self.arch.feature_dim

    def params(self):
        return {**self.hyper.params, **self.norm.params}

    def arrays(self):
        return {**self.hyper.arrays(), **self.norm.arrays()}

    def load(self, arrays):
        self.hyper.load(arrays)
        self.norm.load(arrays)

    def kernels(self, descriptor):
        return hyper_forward(self.hyper, descriptor)

    def features(self, descriptor, x, mode="eval", cols=None):
        return encoder_forward(self.kernels(descriptor), self.norm, self.arch, x, mode=mode, cols=cols)

    def describe(self):
        return {
            "kind": self.kind,
            "architecture": self.arch.to_dict(),
            "n_families": self.hyper.n_families,
            "hidden": self.hyper.hidden,
            "activation": self.hyper.activation,
        }


class PlainEncoder:
    """The same conv/BN encoder with ordinary (non-generated) conv weights."""

    kind = "plain"

    def __init__(self, arch=SYNTHETIC_ARCH, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.arch = arch
        self.conv = {}
        for l, layer in enumerate(arch.layers):
            bound = 1.0 / np.sqrt(layer.in_ch * layer.kernel ** 2)
            self.conv[f"conv.{l}.weight"] = Tensor(rng.uniform(-bound, bound, layer.weight_shape), requires_grad=True)
        self.norm = SharedNorm(arch)

    @property
    def feature_dim(self):
        return self.arch.feature_dim

    def params(self):
        return {**self.conv, **self.norm.params}

    def arrays(self):
        return {**{k: v.data for k, v in self.conv.items()}, **self.norm.arrays()}

    def load(self, arrays):
        for k in self.conv:
            self.conv[k].data = np.array(arrays[k])
        self.norm.load(arrays)

    def kernels(self, descriptor=None):
        return [self.conv[f"conv.{l}.weight"] for l in range(len(self.arch.layers))]

    def features(self, descriptor, x, mode="eval", cols=None):
        return encoder_forward(self.kernels(), self.norm, self.arch, x, mode=mode, cols=cols)

    def describe(self):
        return {"kind": self.kind, "architecture": self.arch.to_dict()}


def encode(model, i, x, mode="eval"):
    """Flat feature vectors [B, D] for images ``x`` under descriptor ``i``."""
    return model.features(i, x, mode=mode)


@dataclass
class TaskHead:
    """Linear readout ⟨φ, f⟩ without bias."""

    weight: Tensor
    name: str = "head"

    @classmethod
    def zeros(cls, feature_dim, n_out, name="head"):
        return cls(Tensor(np.zeros((feature_dim, n_out)), requires_grad=True), name)

    @property
    def n_out(self):
        return self.weight.shape[1]

    def __call__(self, features):
        if features.shape[1] != self.weight.shape[0]:
            raise ValueError(
                f"head {self.name!r} expects {self.weight.shape[0]} features, encoder gives {features.shape[1]}"
            )
        return linear(features, self.weight)


def predict(head, model, i, x, mode="eval"):
    return head(encode(model, i, x, mode=mode))


def round_descriptor(i, levels=2):
    """Snap each component to the nearest of {0, 1/(levels-1), ..., 1}; ties round up."""
    if levels < 2:
        raise ValueError("levels must be at least 2")
    i = np.asarray(i.data if isinstance(i, Tensor) else i, dtype=np.float64)
    steps = levels - 1
    return np.clip(np.floor(i * steps + 0.5), 0, steps) / steps


def descriptor_grid(n_families, levels=2):
    """All levels**K discretized descriptors."""
    axes = [np.linspace(0.0, 1.0, levels)] * n_families
    return np.array(np.meshgrid(*axes, indexing="ij")).reshape(n_families, -1).T
