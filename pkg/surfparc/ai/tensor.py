"""
Named trainable arrays with gradient buffers.

Finite checks after every op are off unless switched on (debug/testing configs).
"""
import numpy as np

from surfparc.errors import ContractViolation, NumericError

_check_finite = False


def set_check_finite(enabled: bool):
    global _check_finite
    _check_finite = bool(enabled)


def check_finite(name: str, array: np.ndarray):
    """Raise NumericError on NaN/Inf, only while finite checks are on."""
    if _check_finite and not np.all(np.isfinite(array)):
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NumericError(f'non-finite values in {name}', {'count': bad})


class Parameter:
    """64-bit value plus a gradient buffer of the same shape."""

    def __init__(self, name: str, value):
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self):
        self.grad.fill(0.0)

    def accumulate(self, grad: np.ndarray):
        if grad.shape != self.value.shape:
            raise ContractViolation(
                f'gradient for {self.name} has shape {grad.shape}, expected {self.value.shape}'
            )
        self.grad += grad

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.value)))

    def __repr__(self):
        return f'Parameter({self.name!r}, shape={self.value.shape})'
