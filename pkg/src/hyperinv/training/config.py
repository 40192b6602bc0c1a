from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from ..numerics import LrSchedule
from ..numerics.optim import every_n_milestones


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    lr: float = 5e-4
    schedule: str = "cosine"  # constant | cosine | multistep
    decay_every_epochs: int = 10  # multistep only
    gamma: float = 0.1
    weight_decay: float = 0.0
    decay_heads_only: bool = False
    seed: int = 0
    m: int = 1  # augmentation samples averaged per example
    parametrization: str = "sigmoid"  # descriptor constraint: sigmoid | clamp
    grad_clip: float | None = None
    levels: int = 2  # descriptor discretization levels
    full_batch_limit: int = 512  # downstream: full batch when the train set is this small
    descriptor_lr: float | None = None  # downstream descriptor lr; None means same as lr
    bn_mode: str = "eval"  # downstream BN: eval (stored stats) | batch (downstream batch stats)

    def __post_init__(self):
        if self.parametrization not in ("sigmoid", "clamp"):
            raise ValueError(f"unknown descriptor parametrization {self.parametrization!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.m < 1:
            raise ValueError("epochs, batch_size and m must be positive")
        if self.schedule not in ("constant", "cosine", "multistep"):
            raise ValueError(f"unknown schedule {self.schedule!r}; expected constant, cosine or multistep")
        if self.bn_mode not in ("eval", "batch"):
            raise ValueError(f"unknown bn_mode {self.bn_mode!r}; expected eval or batch")
        if self.lr <= 0 or (self.descriptor_lr is not None and self.descriptor_lr <= 0):
            raise ValueError("learning rates must be positive")

    def lr_schedule(self, steps_per_epoch):
        total = max(1, self.epochs * steps_per_epoch)
        milestones = ()
        if self.schedule == "multistep":
            milestones = every_n_milestones(total, self.decay_every_epochs * steps_per_epoch)
        return LrSchedule(self.lr, total, self.schedule, milestones, self.gamma)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)

    def but(self, **changes):
        return replace(self, **changes)


# supervised multi-task pre-training
PRETRAIN = TrainConfig()
# contrastive pre-training
CONTRASTIVE = TrainConfig(lr=3e-4, weight_decay=1e-4)
# downstream descriptor + head fitting
DOWNSTREAM = TrainConfig(epochs=100, schedule="multistep", decay_every_epochs=10, gamma=0.1)
