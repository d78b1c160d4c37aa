"""
A subject ready for the network: mesh, features, labels and every graph
structure both sub-networks need, precomputed once at load time.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from surfparc.ai.pooling import PoolStage, build_hierarchy
from surfparc.ai.spline_conv import BSplineBasis, KernelSupport
from surfparc.errors import ContractViolation, DataError
from surfparc.geometry.frames import VertexFrames, estimate_vertex_frames
from surfparc.geometry.mesh import SurfaceGraph, TriangleMesh, build_surface_graph
from surfparc.geometry.pseudo_coords import (
    EXTRINSIC, INTRINSIC, EdgePseudoCoords, extrinsic_pseudo_coords, intrinsic_pseudo_coords,
)

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Subject:
    subject_id: str
    mesh: TriangleMesh
    features: np.ndarray
    labels: Optional[np.ndarray]
    graph: SurfaceGraph
    frames: VertexFrames
    intrinsic: EdgePseudoCoords
    extrinsic: EdgePseudoCoords
    hierarchy: List[PoolStage]
    _supports: Dict[Tuple[str, int, BSplineBasis], KernelSupport] = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, subject_id: str, mesh: TriangleMesh, features: np.ndarray,
              labels: Optional[np.ndarray] = None, hops: int = 1, pool_depth: int = 2,
              seed: Optional[int] = None) -> 'Subject':
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or len(features) != mesh.num_vertices:
            raise DataError(f'subject {subject_id}: features have shape {features.shape}, '
                            f'mesh has {mesh.num_vertices} vertices')
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (mesh.num_vertices,):
                raise DataError(
                    f'subject {subject_id}: {len(labels)} labels for {mesh.num_vertices} vertices')
        graph = build_surface_graph(mesh, hops)
        frames = estimate_vertex_frames(mesh)
        return cls(
            subject_id=subject_id,
            mesh=mesh,
            features=features,
            labels=labels,
            graph=graph,
            frames=frames,
            intrinsic=intrinsic_pseudo_coords(graph, frames, mesh),
            extrinsic=extrinsic_pseudo_coords(graph, mesh.positions),
            hierarchy=build_hierarchy(graph, pool_depth, seed=seed),
        )

    @property
    def num_vertices(self) -> int:
        return self.mesh.num_vertices

    @property
    def positions(self) -> np.ndarray:
        return self.mesh.positions

    def graph_at(self, level: int) -> SurfaceGraph:
        return self.graph if level == 0 else self.hierarchy[level - 1].graph

    def support(self, kind: str, level: int, basis: BSplineBasis) -> KernelSupport:
        """Kernel support on the fine graph (level 0) or after `level` pool_pair steps."""
        key = (kind, level, basis)
        if key not in self._supports:
            if kind == INTRINSIC:
                if level != 0:
                    raise ContractViolation('intrinsic pseudo-coordinates exist on the fine graph only')
                pseudo = self.intrinsic
            elif kind == EXTRINSIC:
                if level > len(self.hierarchy):
                    raise ContractViolation(
                        f'subject {self.subject_id} has only {len(self.hierarchy)} pool levels')
                pseudo = self.extrinsic if level == 0 else self.hierarchy[level - 1].pseudo
            else:
                raise ContractViolation(f'unknown pseudo-coordinate kind {kind!r}')
            self._supports[key] = KernelSupport.build(self.graph_at(level), pseudo, basis)
        return self._supports[key]

    def permute(self, perm: np.ndarray) -> 'Subject':
        """The same subject with vertices relabelled so new vertex k is old vertex perm[k]."""
        perm = np.asarray(perm, dtype=np.int64)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(len(perm))
        mesh = TriangleMesh(self.mesh.positions[perm], inverse[self.mesh.faces])
        graph, order = self.graph.permute(perm)
        hierarchy = list(self.hierarchy)
        if hierarchy:
            hierarchy[0] = hierarchy[0].relabel_fine(perm)
        return Subject(
            subject_id=self.subject_id,
            mesh=mesh,
            features=self.features[perm],
            labels=None if self.labels is None else self.labels[perm],
            graph=graph,
            frames=self.frames.permute(perm),
            intrinsic=self.intrinsic.reorder(order),
            extrinsic=self.extrinsic.reorder(order),
            hierarchy=hierarchy,
        )

    def graph_hash(self) -> str:
        digest = hashlib.md5(self.graph.content_hash().encode())
        for array in (self.intrinsic.values, self.extrinsic.values):
            digest.update(np.ascontiguousarray(array).tobytes())
        for stage in self.hierarchy:
            digest.update(stage.levels[0].assignment.tobytes())
            digest.update(stage.levels[1].assignment.tobytes())
        return digest.hexdigest()
