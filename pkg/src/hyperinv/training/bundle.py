"""Pre-trained encoders with their training-task heads, and their checkpoints."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..hypernet import Architecture, HyperEncoder, PlainEncoder, TaskHead
from ..numerics import Tensor, arrays_digest, checkpoint_digest, load_checkpoint, save_checkpoint
from ..numerics.checkpoint import CheckpointError


@dataclass
class PretrainedBundle:
    model: HyperEncoder | PlainEncoder
    heads: dict = field(default_factory=dict)
    tasks: list = field(default_factory=list)  # [{"name", "label_field", "descriptor", "head_size"}]
    log: list = field(default_factory=list)  # per-epoch rows
    config: dict = field(default_factory=dict)

    @property
    def is_hyper(self):
        return isinstance(self.model, HyperEncoder)

    @property
    def feature_dim(self):
        return self.model.feature_dim

    def arrays(self):
        out = dict(self.model.arrays())
        for name, head in self.heads.items():
            out[f"head.{name}.weight"] = head.weight.data
        return out

    def digest(self):
        return arrays_digest(self.arrays())

    def frozen_model(self):
        """A copy of the encoder whose tensors never record gradients."""
        clone = copy.copy(self.model)
        if self.is_hyper:
            clone.hyper = copy.copy(self.model.hyper)
            clone.hyper.params = {k: Tensor(v.data) for k, v in self.model.hyper.params.items()}
        else:
            clone.conv = {k: Tensor(v.data) for k, v in self.model.conv.items()}
        clone.norm = copy.copy(self.model.norm)
        clone.norm.params = {k: Tensor(v.data) for k, v in self.model.norm.params.items()}
        clone.norm.stats = [copy.deepcopy(s) for s in self.model.norm.stats]
        return clone

    def save(self, stem):
        meta = {
            "model": self.model.describe(),
            "heads": {name: list(h.weight.shape) for name, h in self.heads.items()},
            "tasks": self.tasks,
            "config": self.config,
        }
        save_checkpoint(stem, self.arrays(), meta)
        return checkpoint_digest(stem)

    @classmethod
    def load(cls, stem):
        arrays, meta = load_checkpoint(stem)
        try:
            desc = meta["model"]
            arch = Architecture.from_dict(desc["architecture"])
            if desc["kind"] == "hyper":
                model = HyperEncoder(arch, desc["n_families"], desc["hidden"], desc["activation"])
            elif desc["kind"] == "plain":
                model = PlainEncoder(arch)
            else:
                raise CheckpointError(f"unknown model kind {desc['kind']!r}")
            model.load(arrays)
            heads = {
                name: TaskHead(Tensor(np.array(arrays[f"head.{name}.weight"]), requires_grad=True), name)
                for name in meta.get("heads", {})
            }
        except KeyError as exc:
            raise CheckpointError(f"checkpoint {stem} is missing {exc}") from None
        return cls(model, heads, meta.get("tasks", []), [], meta.get("config", {}))
