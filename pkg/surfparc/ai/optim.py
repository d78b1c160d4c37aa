"""
SGD (optionally with heavy-ball momentum) and step-wise multiplicative learning-rate decay.
"""
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable

import numpy as np

from surfparc.ai.tensor import Parameter
from surfparc.errors import ConfigError, NumericError


@dataclass
class SgdState:
    lr: float
    decay_factor: float = 0.5
    decay_interval: int = 20
    momentum: float = 0.0
    step: int = 0
    velocity: Dict[str, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f'learning rate must be positive, got {self.lr}')
        if not 0 < self.decay_factor <= 1:
            raise ConfigError(f'decay factor must be in (0, 1], got {self.decay_factor}')
        if self.decay_interval < 1:
            raise ConfigError(f'decay interval must be at least 1, got {self.decay_interval}')
        if not 0 <= self.momentum < 1:
            raise ConfigError(f'momentum must be in [0, 1), got {self.momentum}')

    def to_dict(self) -> Dict:
        data = asdict(self)
        # Velocity buffers are transient and are not checkpointed
        data.pop('velocity')
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> 'SgdState':
        return cls(**data)


def sgd_step(params: Iterable[Parameter], state: SgdState):
    """
    p <- p - lr * v with v <- momentum * v + grad, then advance the decay schedule.

    With momentum 0 this is plain p <- p - lr * grad. Nothing is written unless
    every updated parameter is finite.
    """
    params = list(params)
    updates = []
    for p in params:
        velocity = p.grad
        if state.momentum:
            previous = state.velocity.get(p.name)
            if previous is not None:
                velocity = state.momentum * previous + p.grad
            velocity = velocity.copy()
        value = p.value - state.lr * velocity
        if not np.all(np.isfinite(value)):
            raise NumericError(f'parameter {p.name} would become non-finite',
                               {'step': state.step, 'lr': state.lr})
        updates.append((p, value, velocity))
    for p, value, velocity in updates:
        p.value = value
        if state.momentum:
            state.velocity[p.name] = velocity
    state.step += 1
    if state.step % state.decay_interval == 0:
        state.lr *= state.decay_factor
