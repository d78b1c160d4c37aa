"""
Triangle meshes and the sparse surface graphs built on top of them.

Geodesic distances are approximated by Dijkstra over mesh edge lengths
(scipy.sparse.csgraph), which is exact enough for the 1-2 hop supports the
convolutions use.
"""
import hashlib
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra, shortest_path

from surfparc.errors import ContractViolation, MeshError

logger = logging.getLogger(__name__)

# Sources per Dijkstra batch; bounds the dense (batch, N) distance block
GEODESIC_BATCH = 512


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Vertex positions, triangle faces and optional per-vertex features."""

    positions: np.ndarray
    faces: np.ndarray
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        positions = np.array(self.positions, dtype=np.float64)
        faces = np.array(self.faces, dtype=np.int64)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise MeshError(f'positions must be N x 3, got shape {positions.shape}')
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f'faces must be F x 3 (triangles only), got shape {faces.shape}')
        n = len(positions)
        if faces.size and (faces.min() < 0 or faces.max() >= n):
            bad = int(np.flatnonzero((faces < 0).any(axis=1) | (faces >= n).any(axis=1))[0])
            raise MeshError(f'face {bad} references a vertex outside [0, {n})')
        degenerate = ((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2])
                      | (faces[:, 0] == faces[:, 2]))
        if degenerate.any():
            bad = int(np.flatnonzero(degenerate)[0])
            raise MeshError(f'face {bad} is degenerate (repeated vertex index)')
        features = self.features
        if features is not None:
            features = np.array(features, dtype=np.float64)
            if features.ndim == 1:
                features = features[:, None]
            if len(features) != n:
                raise MeshError(f'feature matrix has {len(features)} rows, mesh has {n} vertices')
            features.setflags(write=False)
        positions.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, 'positions', positions)
        object.__setattr__(self, 'faces', faces)
        object.__setattr__(self, 'features', features)

    @property
    def num_vertices(self) -> int:
        return len(self.positions)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (i < j) pairs, lexicographically ordered."""
        f = self.faces
        pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        pairs.sort(axis=1)
        edges = np.unique(pairs, axis=0).reshape(-1, 2)
        edges.setflags(write=False)
        return edges

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.positions[e[:, 1]] - self.positions[e[:, 0]], axis=1)

    def adjacency(self, weighted: bool = False) -> sparse.csr_matrix:
        """Symmetric one-ring adjacency; edge lengths as weights when weighted."""
        e = self.edges
        n = self.num_vertices
        data = self.edge_lengths if weighted else np.ones(len(e))
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        adj = sparse.csr_matrix((np.concatenate([data, data]), (rows, cols)), shape=(n, n))
        adj.sort_indices()
        return adj

    def face_normals(self, normalize: bool = True) -> np.ndarray:
        p = self.positions
        f = self.faces
        normals = np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])
        if normalize:
            lengths = np.linalg.norm(normals, axis=1, keepdims=True)
            normals = normals / np.where(lengths > 0, lengths, 1.0)
        return normals

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted average of incident face normals, normalized."""
        # Unnormalized cross products already carry twice the face area
        weighted = self.face_normals(normalize=False)
        normals = np.zeros_like(self.positions)
        for corner in range(3):
            np.add.at(normals, self.faces[:, corner], weighted)
        lengths = np.linalg.norm(normals, axis=1)
        if np.any(lengths == 0):
            bad = int(np.flatnonzero(lengths == 0)[0])
            raise MeshError(f'vertex {bad} has no well-defined normal (no incident area)')
        return normals / lengths[:, None]

    def num_components(self) -> int:
        count, _ = connected_components(self.adjacency(), directed=False)
        return int(count)

    def check_connected(self):
        """Geodesics need a single connected component."""
        count = self.num_components()
        if count != 1:
            raise MeshError(f'mesh edge graph is disconnected: {count} connected components')

    def with_positions(self, positions: np.ndarray) -> 'TriangleMesh':
        return TriangleMesh(positions, self.faces, self.features)


@dataclass(frozen=True, eq=False)
class SurfaceGraph:
    """Sparse symmetric edge list ε(i, j) with per-edge geometric records.

    Edges are directed pairs (rows[e] = center i, cols[e] = neighbour j),
    sorted by (i, j). rho is the geodesic distance on fine graphs and the
    Euclidean distance on pooled graphs.
    """

    num_vertices: int
    rows: np.ndarray
    cols: np.ndarray
    positions: np.ndarray
    rho: np.ndarray
    hops: int = 1

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        for name, value in (('rows', rows), ('cols', cols)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def num_edges(self) -> int:
        return len(self.rows)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Euclidean offset pos_j - pos_i for every edge."""
        return self.positions[self.cols] - self.positions[self.rows]

    @cached_property
    def degree(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.num_vertices)

    @cached_property
    def indptr(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.degree)])

    def adjacency(self) -> sparse.csr_matrix:
        n = self.num_vertices
        return sparse.csr_matrix(
            (np.ones(self.num_edges), self.cols.copy(), self.indptr.copy()), shape=(n, n)
        )

    def reverse_index(self) -> np.ndarray:
        """Index of edge (j, i) for every edge (i, j)."""
        n = self.num_vertices
        forward = self.rows * n + self.cols
        backward = self.cols * n + self.rows
        return np.searchsorted(forward, backward)

    def neighbours(self, vertex: int) -> np.ndarray:
        return self.cols[self.indptr[vertex]:self.indptr[vertex + 1]]

    def with_positions(self, positions: np.ndarray) -> 'SurfaceGraph':
        return SurfaceGraph(
            self.num_vertices, self.rows, self.cols, positions,
            euclidean_lengths(positions, self.rows, self.cols), self.hops,
        )

    def permute(self, perm: np.ndarray) -> Tuple['SurfaceGraph', np.ndarray]:
        """Relabel vertices so new vertex k is old vertex perm[k].

        Returns the relabelled graph and the edge order mapping new edges to old
        edge indices (to carry per-edge data along).
        """
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(len(perm))
        rows = inverse[self.rows]
        cols = inverse[self.cols]
        order = np.lexsort((cols, rows))
        graph = SurfaceGraph(
            self.num_vertices, rows[order], cols[order], self.positions[perm],
            self.rho[order], self.hops,
        )
        return graph, order

    def content_hash(self) -> str:
        digest = hashlib.md5()
        for array in (self.rows, self.cols, self.rho, self.positions):
            digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()


def euclidean_lengths(positions: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return np.linalg.norm(positions[cols] - positions[rows], axis=1)


def graph_from_adjacency(adjacency: sparse.spmatrix, positions: np.ndarray, hops: int = 1) -> SurfaceGraph:
    """Edge list from a sparse pattern, self-loops dropped, Euclidean rho."""
    coo = sparse.coo_matrix(adjacency)
    keep = (coo.row != coo.col) & (coo.data != 0)
    rows = coo.row[keep].astype(np.int64)
    cols = coo.col[keep].astype(np.int64)
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    return SurfaceGraph(adjacency.shape[0], rows, cols, positions,
                        euclidean_lengths(positions, rows, cols), hops)


def build_surface_graph(mesh: TriangleMesh, hops: int = 1) -> SurfaceGraph:
    """Connect every vertex to its <= hops face-adjacency neighbours.

    The graph is symmetric, free of self-loops and carries geodesic rho per edge.
    """
    if hops < 1:
        raise ContractViolation(f'hops must be at least 1, got {hops}')
    mesh.check_connected()
    adjacency = mesh.adjacency()
    reach = adjacency.copy()
    frontier = adjacency
    for _ in range(hops - 1):
        frontier = (frontier @ adjacency).tocsr()
        frontier.data[:] = 1.0
        reach = reach + frontier
    reach = reach.tocsr()
    reach.data[:] = 1.0
    graph = graph_from_adjacency(reach, mesh.positions, hops)
    if hops == 1:
        rho = graph.rho
    else:
        rho = edge_geodesics(mesh, graph.rows, graph.cols, limit=hops * float(mesh.edge_lengths.max()))
    graph = SurfaceGraph(graph.num_vertices, graph.rows, graph.cols, mesh.positions, rho, hops)
    logger.debug(f"🕸️ Surface graph: {graph.num_vertices} vertices, "
                 f"{graph.num_edges} directed edges, hops={hops}")
    return graph


def edge_geodesics(mesh: TriangleMesh, rows: np.ndarray, cols: np.ndarray, limit: float) -> np.ndarray:
    """Dijkstra distance for every (rows[e], cols[e]) pair, batched by source."""
    weights = mesh.adjacency(weighted=True)
    rho = np.empty(len(rows))
    sources = np.unique(rows)
    for start in range(0, len(sources), GEODESIC_BATCH):
        batch = sources[start:start + GEODESIC_BATCH]
        dist = dijkstra(weights, directed=False, indices=batch, limit=limit)
        # rows are sorted, so each source's edges form one contiguous block
        lo = np.searchsorted(rows, batch[0], side='left')
        hi = np.searchsorted(rows, batch[-1], side='right')
        local = np.searchsorted(batch, rows[lo:hi])
        rho[lo:hi] = dist[local, cols[lo:hi]]
    if not np.all(np.isfinite(rho)):
        raise MeshError('geodesic search limit too small for the requested hop neighbourhood')
    return rho


def geodesic_distances(mesh: TriangleMesh, source: int, radius: Optional[float] = None,
                       max_hops: Optional[int] = None) -> Dict[int, float]:
    """Shortest-path distance along mesh edges from one source.

    Args:
        mesh: Input mesh.
        source: Source vertex index.
        radius: Keep vertices whose distance is at most this length.
        max_hops: Keep vertices at most this many edges away.

    Returns:
        dict vertex -> distance, always containing source -> 0.
    """
    if not 0 <= source < mesh.num_vertices:
        raise ContractViolation(f'source vertex {source} outside [0, {mesh.num_vertices})')
    limit = np.inf if radius is None else float(radius)
    dist = dijkstra(mesh.adjacency(weighted=True), directed=False, indices=source, limit=limit)
    within = np.isfinite(dist)
    if max_hops is not None:
        hop_count = shortest_path(mesh.adjacency(), directed=False, unweighted=True, indices=source)
        within &= hop_count <= max_hops
    return {int(v): float(dist[v]) for v in np.flatnonzero(within)}


def count_label_components(structure, labels: np.ndarray) -> Tuple[int, Dict[int, int]]:
    """Connected components of same-label vertices.

    Args:
        structure: Anything with an adjacency() method (TriangleMesh, SurfaceGraph).
        labels: Per-vertex integer labels.

    Returns:
        (total component count, {label: component count}).
    """
    labels = np.asarray(labels)
    coo = sparse.coo_matrix(structure.adjacency())
    same = labels[coo.row] == labels[coo.col]
    n = len(labels)
    masked = sparse.csr_matrix((np.ones(int(same.sum())), (coo.row[same], coo.col[same])), shape=(n, n))
    total, component = connected_components(masked, directed=False)
    per_label = {}
    for label in np.unique(labels):
        per_label[int(label)] = int(len(np.unique(component[labels == label])))
    return int(total), per_label
