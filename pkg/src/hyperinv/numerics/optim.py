"""Adam with decoupled weight decay, learning-rate schedules, grad clipping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class AdamState:
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    # names of parameters that receive weight decay; None means all of them
    decay_names: frozenset | None = None


def adam_step(params, grads, state, lr):
    """One Adam update of ``params`` (name -> Tensor) from ``grads`` (name -> array).

    Parameters missing from ``grads`` keep their values and moments. Arrays are
    replaced rather than modified, so previously captured values stay valid.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.isfinite(g).sum())
            raise NonFiniteGradient(f"gradient of {name!r} has {bad} non-finite entries")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {p.data.shape}")
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        m = (1.0 - b1) * g if m is None else b1 * m + (1.0 - b1) * g
        v = (1.0 - b2) * g * g if v is None else b2 * v + (1.0 - b2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        new = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        if state.weight_decay > 0 and (state.decay_names is None or name in state.decay_names):
            new = new - lr * state.weight_decay * p.data
        p.data = new
    return params, state


def clip_grad_norm(grads, max_norm):
    """Rescale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for name in grads:
            grads[name] = grads[name] * scale
    return total


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    total_steps: int
    kind: str = "cosine"
    milestones: tuple = ()
    gamma: float = 0.1

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.total_steps <= 0:
            raise ValueError("total_steps must be positive")
        if self.kind not in ("constant", "cosine", "multistep"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")


def schedule_lr(schedule, step):
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    if schedule.kind == "constant":
        return schedule.base_lr
    if schedule.kind == "cosine":
        if step == schedule.total_steps:
            return 0.0
        return schedule.base_lr * (1.0 + math.cos(math.pi * step / schedule.total_steps)) / 2.0
    passed = sum(1 for m in schedule.milestones if step >= m)
    return schedule.base_lr * schedule.gamma ** passed


def every_n_milestones(total_steps, every):
    """Milestones at every ``every`` steps, e.g. a decay each 10 epochs."""
    return tuple(range(every, total_steps + 1, every)) if every > 0 else ()
