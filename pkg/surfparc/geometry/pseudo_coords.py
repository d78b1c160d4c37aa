"""
Edge pseudo-coordinates u(i, j) on which the spline kernels are evaluated.

Intrinsic: (rho, theta), geodesic distance and the angle to the maximal-curvature
direction in the tangent plane of i. Extrinsic: the coordinate difference
x_i - x_j. Both are min-max scaled to [0, 1] per dimension and keep the bounds
used so the scaling can be undone.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from surfparc.errors import ContractViolation
from surfparc.geometry.frames import VertexFrames
from surfparc.geometry.mesh import SurfaceGraph, TriangleMesh

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
INTRINSIC = 'intrinsic'
EXTRINSIC = 'extrinsic'


@dataclass(frozen=True, eq=False)
class EdgePseudoCoords:
    kind: str
    values: np.ndarray   # (E, k) in [0, 1]
    lower: np.ndarray    # (k,) raw value mapped to 0
    upper: np.ndarray    # (k,) raw value mapped to 1

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.values)

    def inverse(self) -> np.ndarray:
        """Raw values recovered from the scaled ones."""
        span = self.upper - self.lower
        return self.lower + self.values * np.where(span > 0, span, 0.0)

    def reorder(self, order: np.ndarray) -> 'EdgePseudoCoords':
        return EdgePseudoCoords(self.kind, self.values[order], self.lower, self.upper)


def scale_to_unit(raw: np.ndarray, lower: Optional[np.ndarray] = None,
                  upper: Optional[np.ndarray] = None):
    """Min-max scale each column into [0, 1]; a zero-width column maps to 0.5."""
    raw = np.asarray(raw, dtype=np.float64)
    if len(raw) == 0:
        k = raw.shape[1]
        zeros = np.zeros(k)
        return raw.copy(), zeros if lower is None else lower, zeros if upper is None else upper
    lower = raw.min(axis=0) if lower is None else np.asarray(lower, dtype=np.float64)
    upper = raw.max(axis=0) if upper is None else np.asarray(upper, dtype=np.float64)
    span = upper - lower
    degenerate = span <= 0
    values = (raw - lower) / np.where(degenerate, 1.0, span)
    values = np.clip(values, 0.0, 1.0)
    values[:, degenerate] = 0.5
    return values, lower, upper


def extrinsic_pseudo_coords(graph: SurfaceGraph, positions: Optional[np.ndarray] = None) -> EdgePseudoCoords:
    positions = graph.positions if positions is None else np.asarray(positions, dtype=np.float64)
    if len(positions) != graph.num_vertices:
        raise ContractViolation(
            f'{len(positions)} positions given for a graph with {graph.num_vertices} vertices'
        )
    raw = positions[graph.rows] - positions[graph.cols]
    values, lower, upper = scale_to_unit(raw)
    return EdgePseudoCoords(EXTRINSIC, values, lower, upper)


def intrinsic_raw(graph: SurfaceGraph, frames: VertexFrames, mesh: TriangleMesh) -> np.ndarray:
    """Unscaled (rho, theta) per edge, theta in [0, 2*pi)."""
    if len(frames) != graph.num_vertices or mesh.num_vertices != graph.num_vertices:
        raise ContractViolation('frames, mesh and graph disagree on the vertex count')
    rows, cols = graph.rows, graph.cols
    d = mesh.positions[cols] - mesh.positions[rows]
    n = frames.normals[rows]
    c = frames.curvature_directions[rows]
    proj = d - np.sum(d * n, axis=1, keepdims=True) * n
    x = np.sum(proj * c, axis=1)
    y = np.sum(proj * np.cross(n, c), axis=1)
    theta = np.mod(np.arctan2(y, x), TWO_PI)
    theta[theta >= TWO_PI] = 0.0

    proj_len = np.linalg.norm(proj, axis=1)
    along_normal = proj_len <= 1e-12 * np.maximum(np.linalg.norm(d, axis=1), 1e-300)
    if along_normal.any():
        theta[along_normal] = 0.0
        logger.warning(f"⚠️ Zero-length tangent projection on {int(along_normal.sum())} edge(s); "
                       "theta set to 0")
    return np.stack([graph.rho, theta], axis=1)


def intrinsic_pseudo_coords(graph: SurfaceGraph, frames: VertexFrames,
                            mesh: TriangleMesh) -> EdgePseudoCoords:
    raw = intrinsic_raw(graph, frames, mesh)
    if len(raw):
        lower = np.array([raw[:, 0].min(), 0.0])
        upper = np.array([raw[:, 0].max(), TWO_PI])
    else:
        lower, upper = np.zeros(2), np.array([0.0, TWO_PI])
    values, lower, upper = scale_to_unit(raw, lower, upper)
    return EdgePseudoCoords(INTRINSIC, values, lower, upper)
