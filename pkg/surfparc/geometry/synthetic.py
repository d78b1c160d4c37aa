"""
Synthetic subjects: icospheres with geodesic-Voronoi parcellations.

Every subject of a synthetic dataset shares the icosphere topology, the region
seed vertices and the feature projection; geometry and feature noise vary per
subject.
"""
import logging
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.sparse.csgraph import dijkstra

from surfparc.errors import ConfigError, ContractViolation
from surfparc.geometry.mesh import SurfaceGraph, TriangleMesh

logger = logging.getLogger(__name__)

SeedLike = Union[int, Sequence[int], None]

MAX_ICOSPHERE_LEVEL = 6
FEATURE_NOISE = 0.3

_PHI = (1.0 + 5.0 ** 0.5) / 2.0
_ICOSAHEDRON_VERTICES = np.array([
    [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
    [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
    [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
], dtype=np.float64)
_ICOSAHEDRON_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
], dtype=np.int64)


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def make_icosphere(level: int) -> TriangleMesh:
    """Unit sphere by repeated 4-to-1 subdivision; 10 * 4**level + 2 vertices."""
    if not 0 <= level <= MAX_ICOSPHERE_LEVEL:
        raise ConfigError(f'icosphere level must be in [0, {MAX_ICOSPHERE_LEVEL}], got {level}')
    positions = _normalize_rows(_ICOSAHEDRON_VERTICES)
    faces = _ICOSAHEDRON_FACES.copy()
    for _ in range(level):
        n = len(positions)
        a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
        sides = np.stack([np.stack([a, b], 1), np.stack([b, c], 1), np.stack([c, a], 1)], axis=1)
        keys = np.sort(sides, axis=2).reshape(-1, 2)
        unique, inverse = np.unique(keys, axis=0, return_inverse=True)
        midpoints = _normalize_rows(positions[unique[:, 0]] + positions[unique[:, 1]])
        mid = n + np.asarray(inverse).reshape(-1).reshape(-1, 3)
        ab, bc, ca = mid[:, 0], mid[:, 1], mid[:, 2]
        faces = np.concatenate([
            np.stack([a, ab, ca], 1),
            np.stack([b, bc, ab], 1),
            np.stack([c, ca, bc], 1),
            np.stack([ab, bc, ca], 1),
        ])
        positions = np.vstack([positions, midpoints])
    return TriangleMesh(positions, faces)


def perturb_sphere(mesh: TriangleMesh, amplitude: float = 0.05, seed: SeedLike = None,
                   waves: int = 3) -> TriangleMesh:
    """Smooth radial bumps so subjects differ in shape but share topology."""
    rng = np.random.default_rng(seed)
    directions = _normalize_rows(rng.normal(size=(waves, 3)))
    frequency = rng.uniform(1.0, 3.0, size=waves)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=waves)
    unit = _normalize_rows(mesh.positions)
    bumps = np.sin(unit @ directions.T * frequency + phase).mean(axis=1)
    radius = 1.0 + amplitude * bumps
    return mesh.with_positions(unit * radius[:, None])


def synth_labels_voronoi(mesh: TriangleMesh, regions: int, seed: SeedLike,
                         noise_seed: SeedLike = None,
                         noise: float = FEATURE_NOISE) -> Tuple[np.ndarray, np.ndarray]:
    """
    Label each vertex by its geodesically nearest of `regions` seed vertices.

    Args:
        mesh: Input mesh.
        regions: Number of labels L, 1 <= L <= N.
        seed: Draws the seed vertices and the label-to-feature projection.
        noise_seed: Draws the feature noise; defaults to `seed`.
        noise: Gaussian noise standard deviation.

    Returns:
        (labels (N,), features (N, 3))
    """
    n = mesh.num_vertices
    if not 1 <= regions <= n:
        raise ContractViolation(f'regions must be in [1, {n}], got {regions}')
    rng = np.random.default_rng(seed)
    seeds = rng.choice(n, size=regions, replace=False)
    projection = rng.normal(size=(regions, 3))
    dist = dijkstra(mesh.adjacency(weighted=True), directed=False, indices=seeds)
    labels = np.argmin(dist, axis=0).astype(np.int64)

    noise_rng = np.random.default_rng(seed if noise_seed is None else noise_seed)
    features = projection[labels] + noise_rng.normal(0.0, noise, size=(n, 3))
    return labels, features


def inject_cluster_noise(graph: SurfaceGraph, labels: np.ndarray, count: int, num_labels: int,
                         seed: SeedLike = None) -> Tuple[np.ndarray, List[int]]:
    """
    Flip `count` interior vertices to a foreign label, one isolated vertex each.

    Only vertices whose whole neighbourhood shares their label are flipped, and
    flipped vertices are never adjacent, so each flip adds exactly one
    single-vertex component.

    Returns:
        (noisy labels, flipped vertex indices)
    """
    if num_labels < 2:
        raise ContractViolation('cluster noise needs at least 2 labels')
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    noisy = labels.copy()
    blocked = np.zeros(graph.num_vertices, dtype=bool)
    flipped = []
    for vertex in rng.permutation(graph.num_vertices):
        if len(flipped) == count:
            break
        if blocked[vertex]:
            continue
        neighbours = graph.neighbours(vertex)
        if np.any(labels[neighbours] != labels[vertex]):
            continue
        noisy[vertex] = (labels[vertex] + 1 + rng.integers(num_labels - 1)) % num_labels
        blocked[vertex] = True
        blocked[neighbours] = True
        flipped.append(int(vertex))
    if len(flipped) < count:
        logger.warning(f"⚠️ Only {len(flipped)} of {count} noise vertices could be placed")
    return noisy, flipped
