"""
Dense layers: activations, Linear and MLP stacks with hand-written backward passes.
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from surfparc.ai.tensor import Parameter, check_finite
from surfparc.errors import ContractViolation

ELU = 'elu'
IDENTITY = 'identity'


def activation_forward(name: str, x: np.ndarray) -> np.ndarray:
    if name == ELU:
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    if name == IDENTITY:
        return x
    raise ContractViolation(f'unknown activation {name!r}')


def activation_backward(name: str, pre: np.ndarray, out: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Gradient wrt the pre-activation, given the upstream gradient wrt the output."""
    if name == ELU:
        return grad * np.where(pre > 0, 1.0, out + 1.0)
    if name == IDENTITY:
        return grad
    raise ContractViolation(f'unknown activation {name!r}')


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    """y = x W + b."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, name: str = 'linear'):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(f'{name}.weight', uniform_init(rng, in_features, (in_features, out_features)))
        self.bias = Parameter(f'{name}.bias', np.zeros(out_features))

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ContractViolation(
                f'{self.weight.name}: input has shape {x.shape}, expected (N, {self.in_features})'
            )
        y = x @ self.weight.value + self.bias.value
        check_finite(self.weight.name, y)
        return y

    def backward(self, x: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
        if grad_y.shape != (len(x), self.out_features):
            raise ContractViolation(
                f'{self.weight.name}: upstream gradient has shape {grad_y.shape}, '
                f'expected ({len(x)}, {self.out_features})'
            )
        self.weight.accumulate(x.T @ grad_y)
        self.bias.accumulate(grad_y.sum(axis=0))
        return grad_y @ self.weight.value.T


def linear_forward(layer: Linear, x: np.ndarray) -> np.ndarray:
    return layer.forward(x)


def linear_backward(layer: Linear, x: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
    return layer.backward(x, grad_y)


@dataclass
class MlpCache:
    inputs: List[np.ndarray]
    pre: List[np.ndarray]
    logits: np.ndarray
    penultimate: np.ndarray


class MlpStack:
    """Linear layers with an activation between them; the last layer emits logits.

    The softmax is applied by the losses and by predict, so forward returns raw
    logits together with the penultimate features (the last layer's input).
    """

    def __init__(self, widths: List[int], rng: np.random.Generator, activation: str = ELU,
                 name: str = 'mlp'):
        if len(widths) < 2:
            raise ContractViolation(f'an MLP needs at least input and output widths, got {widths}')
        self.widths = list(widths)
        self.activation = activation
        self.layers = [
            Linear(widths[i], widths[i + 1], rng, name=f'{name}.{i}') for i in range(len(widths) - 1)
        ]

    @property
    def output_layer(self) -> Linear:
        return self.layers[-1]

    def parameters(self) -> List[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x: np.ndarray) -> MlpCache:
        inputs, pre = [], []
        h = x
        for i, layer in enumerate(self.layers):
            inputs.append(h)
            z = layer.forward(h)
            pre.append(z)
            if i < len(self.layers) - 1:
                h = activation_forward(self.activation, z)
        return MlpCache(inputs=inputs, pre=pre, logits=pre[-1], penultimate=inputs[-1])

    def backward(self, cache: MlpCache, grad_logits: Optional[np.ndarray],
                 grad_penultimate: Optional[np.ndarray] = None) -> np.ndarray:
        last = len(self.layers) - 1
        if grad_logits is None:
            grad_logits = np.zeros_like(cache.logits)
        g = self.layers[last].backward(cache.inputs[last], grad_logits)
        if grad_penultimate is not None:
            g = g + grad_penultimate
        for i in range(last - 1, -1, -1):
            out = cache.inputs[i + 1]
            g = activation_backward(self.activation, cache.pre[i], out, g)
            g = self.layers[i].backward(cache.inputs[i], g)
        return g
