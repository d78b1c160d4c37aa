"""
Continuous B-spline convolution on surface graphs.

A layer owns one scalar kernel x(u) = sum_p w_p B_p(u) over tensor-product
B-spline bases, evaluated at each edge's pseudo-coordinates, and mixes
neighbour features as

    out_i = act( mean_{j in N(i)} x(u_ij) f_j W + f_i W_root + b )
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from surfparc.ai.layers import ELU, activation_backward, activation_forward, uniform_init
from surfparc.ai.tensor import Parameter, check_finite
from surfparc.errors import ContractViolation
from surfparc.geometry.mesh import SurfaceGraph
from surfparc.geometry.pseudo_coords import EdgePseudoCoords

logger = logging.getLogger(__name__)

MAX_DEGREE = 3


@dataclass(frozen=True)
class BSplineBasis:
    """Clamped, equidistant-knot B-spline bases of one degree per dimension.

    Control points are numbered from 0; the flat index of a tensor-product
    control point is row-major over dimensions (last dimension varies fastest).
    """

    degree: int
    kernel_size: Tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(d) for d in self.kernel_size)
        object.__setattr__(self, 'kernel_size', sizes)
        if not 0 <= self.degree <= MAX_DEGREE:
            raise ContractViolation(f'B-spline degree must be in [0, {MAX_DEGREE}], got {self.degree}')
        if not sizes:
            raise ContractViolation('a B-spline basis needs at least one dimension')
        for d in sizes:
            if d < self.degree + 1:
                raise ContractViolation(f'kernel size {d} must be at least degree + 1 = {self.degree + 1}')

    @classmethod
    def create(cls, dim: int, kernel_size: Union[int, Sequence[int]], degree: int = 1) -> 'BSplineBasis':
        if isinstance(kernel_size, int):
            kernel_size = (kernel_size,) * dim
        if len(kernel_size) != dim:
            raise ContractViolation(f'{len(kernel_size)} kernel sizes for a {dim}-dimensional basis')
        return cls(degree, tuple(kernel_size))

    @property
    def dim(self) -> int:
        return len(self.kernel_size)

    @property
    def num_controls(self) -> int:
        return int(np.prod(self.kernel_size))

    @property
    def support_size(self) -> int:
        return (self.degree + 1) ** self.dim

    def knots(self, size: int) -> np.ndarray:
        m = self.degree
        interior = np.arange(1, size - m) / (size - m)
        return np.concatenate([np.zeros(m + 1), interior, np.ones(m + 1)])

    def _univariate(self, t: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray]:
        """First control index and the m+1 possibly-nonzero basis values per sample."""
        m = self.degree
        spans = size - m
        first = np.minimum(np.floor(t * spans).astype(np.int64), spans - 1)
        knots = self.knots(size)
        s = first + m
        values = np.zeros((len(t), m + 1))
        values[:, 0] = 1.0
        left = np.zeros((len(t), m + 1))
        right = np.zeros((len(t), m + 1))
        for j in range(1, m + 1):
            left[:, j] = t - knots[s + 1 - j]
            right[:, j] = knots[s + j] - t
            saved = np.zeros(len(t))
            for r in range(j):
                temp = values[:, r] / (right[:, r + 1] + left[:, j - r])
                values[:, r] = saved + right[:, r + 1] * temp
                saved = left[:, j - r] * temp
            values[:, j] = saved
        return first, values

    def evaluate(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Active tensor-product basis functions for every row of u.

        Args:
            u: (E, k) pseudo-coordinates in [0, 1].

        Returns:
            (indices (E, S), values (E, S)) with S = (m + 1) ** k; some values may be 0.
        """
        u = np.asarray(u, dtype=np.float64)
        if u.ndim == 1:
            u = u[None, :]
        if u.shape[1] != self.dim:
            raise ContractViolation(f'pseudo-coordinates have {u.shape[1]} dims, basis expects {self.dim}')
        if not np.all((u >= 0.0) & (u <= 1.0)):
            raise ContractViolation('pseudo-coordinates must lie in [0, 1]')
        n = len(u)
        index = np.zeros((n, 1), dtype=np.int64)
        value = np.ones((n, 1))
        for axis, size in enumerate(self.kernel_size):
            first, local = self._univariate(u[:, axis], size)
            controls = first[:, None] + np.arange(self.degree + 1)[None, :]
            width = index.shape[1] * (self.degree + 1)
            index = (index[:, :, None] * size + controls[:, None, :]).reshape(n, width)
            value = (value[:, :, None] * local[:, None, :]).reshape(n, width)
        return index, value


def basis_eval(basis: BSplineBasis, u) -> List[Tuple[int, float]]:
    """Nonzero (control index, B_p(u)) pairs at one point, sorted by index."""
    index, value = basis.evaluate(np.asarray(u, dtype=np.float64).reshape(1, -1))
    pairs = {}
    for p, b in zip(index[0], value[0]):
        if b != 0.0:
            pairs[int(p)] = pairs.get(int(p), 0.0) + float(b)
    return sorted(pairs.items())


@dataclass(frozen=True, eq=False)
class KernelSupport:
    """Per-graph precomputation of the active basis products of every edge."""

    basis: BSplineBasis
    num_vertices: int
    rows: np.ndarray
    cols: np.ndarray
    indptr: np.ndarray
    basis_index: np.ndarray
    basis_value: np.ndarray
    inv_degree: np.ndarray

    @classmethod
    def build(cls, graph: SurfaceGraph, pseudo: EdgePseudoCoords, basis: BSplineBasis) -> 'KernelSupport':
        if pseudo.num_edges != graph.num_edges:
            raise ContractViolation(
                f'{pseudo.num_edges} pseudo-coordinate rows for a graph with {graph.num_edges} edges'
            )
        if pseudo.dim != basis.dim:
            raise ContractViolation(f'{pseudo.kind} pseudo-coordinates are {pseudo.dim}-dimensional, '
                                    f'basis expects {basis.dim}')
        index, value = basis.evaluate(pseudo.values)
        degree = graph.degree
        inv_degree = np.where(degree > 0, 1.0 / np.maximum(degree, 1), 0.0)
        return cls(basis, graph.num_vertices, graph.rows, graph.cols, graph.indptr,
                   index, value, inv_degree)

    @property
    def num_edges(self) -> int:
        return len(self.rows)

    @property
    def isolated(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.indptr) == 0)

    def kernel_values(self, weights: np.ndarray) -> np.ndarray:
        return np.sum(weights[self.basis_index] * self.basis_value, axis=1)

    def mean_operator(self, edge_values: np.ndarray) -> sparse.csr_matrix:
        """S with S[i, j] = x_ij / |N(i)|, so S @ F is the kernel-weighted neighbour mean."""
        n = self.num_vertices
        data = edge_values * self.inv_degree[self.rows]
        return sparse.csr_matrix((data, self.cols, self.indptr), shape=(n, n))


@dataclass
class SplineConvCache:
    features: np.ndarray
    support: KernelSupport
    edge_values: np.ndarray
    operator: sparse.csr_matrix
    aggregated: np.ndarray
    pre: np.ndarray
    out: np.ndarray


class SplineConvLayer:
    def __init__(self, in_channels: int, out_channels: int, basis: BSplineBasis,
                 rng: np.random.Generator, activation: str = ELU, root_weight: bool = True,
                 bias: bool = True, name: str = 'conv'):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.basis = basis
        self.activation = activation
        self.name = name
        self.kernel = Parameter(f'{name}.kernel', rng.uniform(0.5, 1.5, size=basis.num_controls))
        self.weight = Parameter(f'{name}.weight', uniform_init(rng, in_channels, (in_channels, out_channels)))
        self.root = (Parameter(f'{name}.root', uniform_init(rng, in_channels, (in_channels, out_channels)))
                     if root_weight else None)
        self.bias = Parameter(f'{name}.bias', np.zeros(out_channels)) if bias else None

    def parameters(self) -> List[Parameter]:
        return [p for p in (self.kernel, self.weight, self.root, self.bias) if p is not None]

    def kernel_eval(self, u) -> np.ndarray:
        index, value = self.basis.evaluate(u)
        return np.sum(self.kernel.value[index] * value, axis=1)

    def forward(self, support: KernelSupport, features: np.ndarray) -> Tuple[np.ndarray, SplineConvCache]:
        return aggregate_forward(self, support, features)

    def backward(self, cache: SplineConvCache, grad_out: np.ndarray) -> np.ndarray:
        return aggregate_backward(self, cache, grad_out)


def kernel_eval(layer: SplineConvLayer, u) -> float:
    return float(layer.kernel_eval(np.asarray(u, dtype=np.float64).reshape(1, -1))[0])


def aggregate_forward(layer: SplineConvLayer, support: KernelSupport,
                      features: np.ndarray) -> Tuple[np.ndarray, SplineConvCache]:
    if support.basis != layer.basis:
        raise ContractViolation(f'{layer.name}: kernel support was built for a different basis')
    if features.ndim != 2 or features.shape != (support.num_vertices, layer.in_channels):
        raise ContractViolation(
            f'{layer.name}: features have shape {features.shape}, '
            f'expected ({support.num_vertices}, {layer.in_channels})'
        )
    if layer.root is None and len(support.isolated):
        raise ContractViolation(
            f'{layer.name}: vertex {int(support.isolated[0])} has no neighbours and the root term is disabled'
        )
    edge_values = support.kernel_values(layer.kernel.value)
    operator = support.mean_operator(edge_values)
    aggregated = operator @ features
    pre = aggregated @ layer.weight.value
    if layer.root is not None:
        pre = pre + features @ layer.root.value
    if layer.bias is not None:
        pre = pre + layer.bias.value
    out = activation_forward(layer.activation, pre)
    check_finite(layer.name, out)
    cache = SplineConvCache(features, support, edge_values, operator, aggregated, pre, out)
    return out, cache


def aggregate_backward(layer: SplineConvLayer, cache: SplineConvCache, grad_out: np.ndarray) -> np.ndarray:
    """Accumulate parameter gradients and return the gradient wrt the input features."""
    if grad_out.shape != cache.out.shape:
        raise ContractViolation(
            f'{layer.name}: upstream gradient has shape {grad_out.shape}, expected {cache.out.shape}'
        )
    support = cache.support
    g = activation_backward(layer.activation, cache.pre, cache.out, grad_out)
    layer.weight.accumulate(cache.aggregated.T @ g)
    if layer.bias is not None:
        layer.bias.accumulate(g.sum(axis=0))
    grad_agg = g @ layer.weight.value.T
    grad_features = cache.operator.T @ grad_agg
    if layer.root is not None:
        layer.root.accumulate(cache.features.T @ g)
        grad_features = grad_features + g @ layer.root.value.T

    rows, cols = support.rows, support.cols
    grad_edge = support.inv_degree[rows] * np.sum(grad_agg[rows] * cache.features[cols], axis=1)
    grad_kernel = np.bincount(
        support.basis_index.ravel(),
        weights=(grad_edge[:, None] * support.basis_value).ravel(),
        minlength=layer.basis.num_controls,
    )
    layer.kernel.accumulate(grad_kernel)
    return np.asarray(grad_features)
