"""
Per-vertex tangent frames and maximal-curvature directions.

Curvature comes from a least-squares quadric c = 0.5*(L a^2 + 2 M ab + N b^2)
fitted over each one-ring in the vertex's tangent basis; (L, M, N) are then the
entries of the shape operator in that orthonormal basis.
"""
import logging
from dataclasses import dataclass
from typing import Iterator, Tuple

import numpy as np

from surfparc.errors import MeshError
from surfparc.geometry.mesh import TriangleMesh

logger = logging.getLogger(__name__)

# |n . x_axis| above this switches the tangent reference to the y axis
REFERENCE_SWITCH = 0.9
UMBILIC_TOL = 1e-6


@dataclass(frozen=True)
class VertexFrame:
    normal: np.ndarray
    tangent_u: np.ndarray
    tangent_v: np.ndarray
    curvature_direction: np.ndarray
    curvatures: Tuple[float, float]
    umbilic: bool


@dataclass(frozen=True, eq=False)
class VertexFrames:
    """Array form of the per-vertex frames; indexing yields a VertexFrame."""

    normals: np.ndarray
    tangent_u: np.ndarray
    tangent_v: np.ndarray
    curvature_directions: np.ndarray
    curvatures: np.ndarray  # (N, 2): maximal-magnitude first
    umbilic: np.ndarray

    def __len__(self) -> int:
        return len(self.normals)

    def __getitem__(self, vertex: int) -> VertexFrame:
        return VertexFrame(
            normal=self.normals[vertex],
            tangent_u=self.tangent_u[vertex],
            tangent_v=self.tangent_v[vertex],
            curvature_direction=self.curvature_directions[vertex],
            curvatures=(float(self.curvatures[vertex, 0]), float(self.curvatures[vertex, 1])),
            umbilic=bool(self.umbilic[vertex]),
        )

    def __iter__(self) -> Iterator[VertexFrame]:
        for vertex in range(len(self)):
            yield self[vertex]

    def permute(self, perm: np.ndarray) -> 'VertexFrames':
        return VertexFrames(
            self.normals[perm], self.tangent_u[perm], self.tangent_v[perm],
            self.curvature_directions[perm], self.curvatures[perm], self.umbilic[perm],
        )


def tangent_basis(normals: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormal (u, v) completing each normal, from a fixed global reference."""
    reference = np.tile(np.array([1.0, 0.0, 0.0]), (len(normals), 1))
    near_parallel = np.abs(normals[:, 0]) > REFERENCE_SWITCH
    reference[near_parallel] = np.array([0.0, 1.0, 0.0])
    u = reference - np.sum(reference * normals, axis=1, keepdims=True) * normals
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v = np.cross(normals, u)
    return u, v


def estimate_vertex_frames(mesh: TriangleMesh, umbilic_tol: float = UMBILIC_TOL) -> VertexFrames:
    """
    Normals, tangent bases and maximal-curvature directions for every vertex.

    Args:
        mesh: Input mesh; every vertex needs at least 3 one-ring neighbours.
        umbilic_tol: Relative principal-curvature gap under which a vertex is
            treated as umbilic (or flat) and the tangent axis u is used as the
            curvature direction.

    Returns:
        VertexFrames
    """
    n_vertices = mesh.num_vertices
    edges = mesh.edges
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    ring_size = np.bincount(rows, minlength=n_vertices)
    if np.any(ring_size < 3):
        bad = int(np.flatnonzero(ring_size < 3)[0])
        raise MeshError(
            f'vertex {bad} has {int(ring_size[bad])} one-ring neighbours; quadric fitting needs at least 3'
        )

    normals = mesh.vertex_normals()
    u, v = tangent_basis(normals)

    d = mesh.positions[cols] - mesh.positions[rows]
    a = np.sum(d * u[rows], axis=1)
    b = np.sum(d * v[rows], axis=1)
    c = np.sum(d * normals[rows], axis=1)
    design = np.stack([0.5 * a * a, a * b, 0.5 * b * b], axis=1)

    normal_matrix = np.zeros((n_vertices, 3, 3))
    np.add.at(normal_matrix, rows, design[:, :, None] * design[:, None, :])
    rhs = np.zeros((n_vertices, 3))
    np.add.at(rhs, rows, design * c[:, None])
    coef = np.einsum('nij,nj->ni', np.linalg.pinv(normal_matrix), rhs)
    l_, m_, n_ = coef[:, 0], coef[:, 1], coef[:, 2]

    mean = 0.5 * (l_ + n_)
    radius = np.sqrt((0.5 * (l_ - n_)) ** 2 + m_ ** 2)
    k1, k2 = mean + radius, mean - radius
    first_is_max = np.abs(k1) >= np.abs(k2)
    k_max = np.where(first_is_max, k1, k2)
    k_other = np.where(first_is_max, k2, k1)

    angle = 0.5 * np.arctan2(2.0 * m_, l_ - n_)
    angle = np.where(first_is_max, angle, angle + 0.5 * np.pi)
    direction = np.cos(angle)[:, None] * u + np.sin(angle)[:, None] * v

    scale = np.maximum(np.abs(k1), np.abs(k2))
    umbilic = (k1 - k2) <= umbilic_tol * scale
    direction[umbilic] = u[umbilic]

    # Eigenvectors have no sign; fix one so that d . u > 0 (or d . v > 0 when d . u == 0)
    along_u = np.sum(direction * u, axis=1)
    along_v = np.sum(direction * v, axis=1)
    flip = (along_u < 0) | ((along_u == 0) & (along_v < 0))
    direction[flip] *= -1.0
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)

    if umbilic.any():
        logger.debug(f"🔵 {int(umbilic.sum())} umbilic/flat vertices use the tangent fallback direction")
    return VertexFrames(
        normals=normals,
        tangent_u=u,
        tangent_v=v,
        curvature_directions=direction,
        curvatures=np.stack([k_max, k_other], axis=1),
        umbilic=umbilic,
    )
