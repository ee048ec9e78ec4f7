# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

from dataclasses import dataclass, asdict
import numpy as np
from .tensor import Tensor
from ..errors import ConfigurationError, UsageError

DEFAULT_LEARNING_RATE = 0.05
DEFAULT_MOMENTUM = 0.9

@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    momentum: float = DEFAULT_MOMENTUM
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}.")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}.")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be non-negative, got {self.weight_decay}.")

    def to_dict(self) -> dict:
        return asdict(self)

def sgd_step(params: list[Tensor], config: SgdConfig,
             velocity: list[np.ndarray | None] | None = None) -> list[np.ndarray]:
    '''
    One momentum SGD update, in place.

    v <- momentum * v + (grad + weight_decay * w)
    w <- w - learning_rate * v

    Returns the velocity buffers to pass to the next call; grad buffers are cleared.
    '''
    if velocity is None:
        velocity = [None] * len(params)
    missing = [p.name or str(i) for i, p in enumerate(params) if p.grad is None]
    if missing:
        raise UsageError(f"sgd_step called on parameters without gradient: {', '.join(missing)}.")

    updated = []
    for p, v in zip(params, velocity):
        g = p.grad
        if config.weight_decay:
            g = g + config.weight_decay * p.data
        v = g.copy() if v is None else config.momentum * v + g
        p.data -= (config.learning_rate * v).astype(p.dtype)
        p.grad = None
        updated.append(v)
    return updated

class Sgd:
    def __init__(self, params: list[Tensor], config: SgdConfig):
        self.params = list(params)
        self.config = config
        self._velocity: list[np.ndarray | None] = [None] * len(self.params)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self._velocity = sgd_step(self.params, self.config, self._velocity)
