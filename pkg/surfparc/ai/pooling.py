"""
Graclus-style greedy pair matching, coarsening and the copy-back unpooling.

Coarse features are sums over cluster members, coarse positions are member
means, and a coarse edge exists wherever a fine edge crosses two clusters.
"""
import logging
import os
from dataclasses import dataclass
from functools import cached_property
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from surfparc.errors import ContractViolation
from surfparc.geometry.mesh import SurfaceGraph, graph_from_adjacency
from surfparc.geometry.pseudo_coords import EdgePseudoCoords, extrinsic_pseudo_coords
from surfparc.geometry.synthetic import SeedLike

logger = logging.getLogger(__name__)

NORMCUT = 'normcut'
UNIT = 'unit'


@dataclass(frozen=True, eq=False)
class CoarseningLevel:
    """One matching round: fine-to-coarse assignment and the coarse graph."""

    assignment: np.ndarray   # (N_fine,) coarse id of every fine vertex
    members: np.ndarray      # (N_coarse, 2) fine members, -1 pads singletons
    coarse_graph: SurfaceGraph

    @property
    def num_fine(self) -> int:
        return len(self.assignment)

    @property
    def num_coarse(self) -> int:
        return len(self.members)

    @property
    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_coarse)

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        """P (N_fine x N_coarse) with P[i, assignment[i]] = 1."""
        n = self.num_fine
        return sparse.csr_matrix((np.ones(n), (np.arange(n), self.assignment)),
                                 shape=(n, self.num_coarse))

    def pool(self, features: np.ndarray) -> np.ndarray:
        if len(features) != self.num_fine:
            raise ContractViolation(
                f'pooling {len(features)} rows through a level with {self.num_fine} fine vertices')
        return np.asarray(self.matrix.T @ features)

    def pool_backward(self, grad_coarse: np.ndarray) -> np.ndarray:
        return grad_coarse[self.assignment]

    def unpool(self, coarse: np.ndarray) -> np.ndarray:
        if len(coarse) != self.num_coarse:
            raise ContractViolation(
                f'unpooling {len(coarse)} rows through a level with {self.num_coarse} coarse vertices'
            )
        return coarse[self.assignment]

    def unpool_backward(self, grad_fine: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix.T @ grad_fine)

    def relabel_fine(self, perm: np.ndarray) -> 'CoarseningLevel':
        """Same clustering after relabelling fine vertices so new k is old perm[k]."""
        perm = np.asarray(perm)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(len(perm))
        members = np.where(self.members >= 0, inverse[np.maximum(self.members, 0)], -1)
        return CoarseningLevel(self.assignment[perm], members, self.coarse_graph)

    def dump(self, path: str):
        """Debug listing: the cluster id of every fine vertex, one per line."""
        tmp = f'{path}.tmp'
        with open(tmp, 'w') as f:
            f.writelines(f'{int(c)}\n' for c in self.assignment)
        os.replace(tmp, path)


def matching_weights(graph: SurfaceGraph, weights: Union[str, np.ndarray, None]) -> np.ndarray:
    if weights is None or (isinstance(weights, str) and weights == NORMCUT):
        degree = graph.degree.astype(np.float64)
        return 1.0 / degree[graph.rows] + 1.0 / degree[graph.cols]
    if isinstance(weights, str) and weights == UNIT:
        return np.ones(graph.num_edges)
    if isinstance(weights, str):
        raise ContractViolation(f'unknown matching weight scheme {weights!r}')
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (graph.num_edges,) or np.any(weights < 0):
        raise ContractViolation('explicit matching weights must be one non-negative value per edge')
    return weights


def graclus_match(graph: SurfaceGraph, weights: Union[str, np.ndarray, None] = NORMCUT,
                  seed: SeedLike = None, order: Optional[np.ndarray] = None) -> CoarseningLevel:
    """
    Greedy maximal matching in a seeded visit order.

    Each unmarked vertex is paired with its unmarked neighbour of largest weight
    (lowest index on ties); vertices left without a partner become singletons.
    Coarse ids are assigned in order of each cluster's smallest member.

    Args:
        graph: Symmetric surface graph.
        weights: 'normcut' (1/deg_i + 1/deg_j), 'unit', or one weight per edge.
        seed: Shuffles the visit order; None visits vertices in index order.
        order: Explicit visit order, overrides seed.
    """
    n = graph.num_vertices
    w = matching_weights(graph, weights)
    if order is None:
        order = np.arange(n) if seed is None else np.random.default_rng(seed).permutation(n)
    indptr, cols = graph.indptr, graph.cols
    partner = np.full(n, -1, dtype=np.int64)
    marked = np.zeros(n, dtype=bool)
    for v in order:
        if marked[v]:
            continue
        marked[v] = True
        lo, hi = indptr[v], indptr[v + 1]
        neighbours = cols[lo:hi]
        free = ~marked[neighbours]
        if free.any():
            candidates = neighbours[free]
            best = int(candidates[np.argmax(w[lo:hi][free])])
            marked[best] = True
            partner[v], partner[best] = best, v

    first = np.where(partner >= 0, np.minimum(np.arange(n), partner), np.arange(n))
    leaders = np.flatnonzero(first == np.arange(n))
    coarse_id = np.empty(n, dtype=np.int64)
    coarse_id[leaders] = np.arange(len(leaders))
    assignment = coarse_id[first]

    members = np.full((len(leaders), 2), -1, dtype=np.int64)
    members[:, 0] = leaders
    paired = partner[leaders] >= 0
    members[paired, 1] = partner[leaders][paired]

    level = _level_from_assignment(graph, assignment, members)
    logger.debug(f"🔗 Graclus round: {n} -> {level.num_coarse} vertices")
    return level


def _level_from_assignment(graph: SurfaceGraph, assignment: np.ndarray,
                           members: np.ndarray) -> CoarseningLevel:
    level = CoarseningLevel(assignment, members, graph)
    p = level.matrix
    sizes = level.cluster_sizes.astype(np.float64)
    positions = np.asarray(p.T @ graph.positions) / sizes[:, None]
    coarse_adjacency = (p.T @ graph.adjacency() @ p).tocsr()
    coarse_graph = graph_from_adjacency(coarse_adjacency, positions, graph.hops)
    return CoarseningLevel(assignment, members, coarse_graph)


def coarsen(level: CoarseningLevel, features: Optional[np.ndarray],
            positions: np.ndarray) -> Tuple[Optional[np.ndarray], np.ndarray, SurfaceGraph]:
    """Sum features and average positions over clusters; union crossing edges."""
    if len(positions) != level.num_fine:
        raise ContractViolation(f'{len(positions)} positions for {level.num_fine} fine vertices')
    sizes = level.cluster_sizes.astype(np.float64)
    coarse_positions = level.pool(positions) / sizes[:, None]
    coarse_features = None if features is None else level.pool(features)
    return coarse_features, coarse_positions, level.coarse_graph.with_positions(coarse_positions)


class PoolResult(NamedTuple):
    levels: Tuple[CoarseningLevel, CoarseningLevel]
    features: Optional[np.ndarray]
    positions: np.ndarray
    graph: SurfaceGraph


def pool_pair(graph: SurfaceGraph, features: Optional[np.ndarray], positions: Optional[np.ndarray] = None,
              seed: SeedLike = None, weights: Union[str, np.ndarray, None] = NORMCUT) -> PoolResult:
    """Two stacked match + coarsen rounds (roughly a fourfold reduction)."""
    positions = graph.positions if positions is None else positions
    rng = None if seed is None else np.random.default_rng(seed)
    first_order = None if rng is None else rng.permutation(graph.num_vertices)
    first = graclus_match(graph, weights, order=first_order)
    f1, p1, g1 = coarsen(first, features, positions)
    second_order = None if rng is None else rng.permutation(g1.num_vertices)
    # explicit per-edge weights only describe the fine graph
    second_weights = weights if weights is None or isinstance(weights, str) else UNIT
    second = graclus_match(g1, second_weights, order=second_order)
    f2, p2, g2 = coarsen(second, f1, p1)
    return PoolResult((first, second), f2, p2, g2)


def unpool(levels: Union[CoarseningLevel, Sequence[CoarseningLevel]], coarse: np.ndarray) -> np.ndarray:
    """Copy coarse rows back through the levels, last level first."""
    if isinstance(levels, CoarseningLevel):
        levels = [levels]
    out = coarse
    for level in reversed(list(levels)):
        out = level.unpool(out)
    return out


@dataclass(frozen=True, eq=False)
class PoolStage:
    """One pool_pair step of a U-shape: two levels plus the coarse graph it lands on."""

    levels: Tuple[CoarseningLevel, CoarseningLevel]
    graph: SurfaceGraph
    pseudo: EdgePseudoCoords

    @property
    def num_fine(self) -> int:
        return self.levels[0].num_fine

    @property
    def num_coarse(self) -> int:
        return self.graph.num_vertices

    def pool(self, features: np.ndarray) -> np.ndarray:
        return self.levels[1].pool(self.levels[0].pool(features))

    def pool_backward(self, grad_coarse: np.ndarray) -> np.ndarray:
        return self.levels[0].pool_backward(self.levels[1].pool_backward(grad_coarse))

    def unpool(self, coarse: np.ndarray) -> np.ndarray:
        return unpool(self.levels, coarse)

    def unpool_backward(self, grad_fine: np.ndarray) -> np.ndarray:
        return self.levels[1].unpool_backward(self.levels[0].unpool_backward(grad_fine))

    def relabel_fine(self, perm: np.ndarray) -> 'PoolStage':
        return PoolStage((self.levels[0].relabel_fine(perm), self.levels[1]), self.graph, self.pseudo)


def build_hierarchy(graph: SurfaceGraph, depth: int, seed: Optional[int] = None,
                    weights: str = NORMCUT) -> List[PoolStage]:
    """`depth` stacked pool_pair steps, each carrying extrinsic pseudo-coordinates."""
    stages = []
    current = graph
    for d in range(depth):
        round_seed = None if seed is None else [int(seed), d]
        result = pool_pair(current, None, current.positions, seed=round_seed, weights=weights)
        stages.append(PoolStage(result.levels, result.graph, extrinsic_pseudo_coords(result.graph)))
        current = result.graph
    return stages
