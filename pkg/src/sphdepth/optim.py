"""SGD with momentum and L2 weight decay, plus the step learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParamError


@dataclass
class OptimizerState:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    velocity: dict = field(default_factory=dict)
    epoch: int = 0
    # parameters exempt from weight decay (batch-norm scale/shift, biases)
    no_decay: frozenset = frozenset()

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ParamError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ParamError("momentum must lie in [0, 1)")


def sgd_step(params: dict, opt: OptimizerState) -> None:
    """One in-place update: ``v = mu*v + (g + wd*w)``, ``w -= lr*v``.

    Parameters without a gradient are skipped. Gradients are cleared afterwards.
    """
    for name, p in params.items():
        if p.grad is None:
            continue
        g = p.grad
        if opt.weight_decay and name not in opt.no_decay:
            g = g + opt.weight_decay * p.data
        v = opt.velocity.get(name)
        v = g.copy() if v is None else opt.momentum * v + g
        opt.velocity[name] = v
        if opt.learning_rate:
            p.data = p.data - opt.learning_rate * v
        p.grad = None


def lr_schedule(epoch: int, lr0: float = 0.01, factor: float = 0.8, every: int = 5) -> float:
    """Step decay: ``lr0 * factor ** (epoch // every)``."""
    if epoch < 0:
        raise ParamError("epoch must be >= 0")
    return lr0 * factor ** (epoch // every)


def zero_grad(params: dict) -> None:
    for p in params.values():
        p.grad = None
