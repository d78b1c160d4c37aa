import logging
import unittest

import numpy as np

from surfparc.errors import MeshError
from surfparc.geometry.frames import VertexFrames, estimate_vertex_frames, tangent_basis
from surfparc.geometry.mesh import TriangleMesh, build_surface_graph
from surfparc.geometry.pseudo_coords import (
    TWO_PI, extrinsic_pseudo_coords, intrinsic_pseudo_coords, intrinsic_raw, scale_to_unit,
)
from surfparc.geometry.synthetic import make_icosphere

COS_10_DEG = np.cos(np.deg2rad(10.0))


def hexagon_fan():
    """Flat fan: center 0 at the origin, ring 1..6 on the unit circle, counter-clockwise."""
    angles = np.arange(6) * np.pi / 3.0
    ring = np.stack([np.cos(angles), np.sin(angles), np.zeros(6)], axis=1)
    positions = np.vstack([[0.0, 0.0, 0.0], ring])
    faces = [[0, 1 + k, 1 + (k + 1) % 6] for k in range(6)]
    return TriangleMesh(positions, faces)


def cylinder(around=24, rows=5, spacing=0.25):
    """Closed unit-radius band around the z axis; vertex (r, k) -> r * around + k."""
    phi = np.arange(around) * 2.0 * np.pi / around
    positions = [[np.cos(p), np.sin(p), (r - rows // 2) * spacing] for r in range(rows) for p in phi]
    faces = []
    for r in range(rows - 1):
        for k in range(around):
            a = r * around + k
            b = r * around + (k + 1) % around
            c = (r + 1) * around + (k + 1) % around
            d = (r + 1) * around + k
            faces += [[a, b, c], [a, c, d]]
    return TriangleMesh(np.array(positions), faces)


class TestVertexFrames(unittest.TestCase):
    def test_flat_fan_falls_back_to_tangent_axis(self):
        """Test the tangent-axis fallback on a flat vertex."""
        frames = estimate_vertex_frames(hexagon_fan())
        center = frames[0]
        self.assertAlmostEqual(abs(center.normal @ np.array([0.0, 0.0, 1.0])), 1.0, places=6)
        self.assertTrue(center.umbilic)
        np.testing.assert_allclose(center.curvature_direction, center.tangent_u, atol=1e-12)
        np.testing.assert_allclose(center.tangent_u, [1.0, 0.0, 0.0], atol=1e-12)

    def test_cylinder_direction_is_circumferential(self):
        """Test that the maximal curvature on a cylinder points around it."""
        around, rows = 24, 5
        frames = estimate_vertex_frames(cylinder(around, rows))
        middle = rows // 2
        for k in range(around):
            v = middle * around + k
            phi = 2.0 * np.pi * k / around
            circumferential = np.array([-np.sin(phi), np.cos(phi), 0.0])
            self.assertGreaterEqual(abs(frames[v].curvature_direction @ circumferential), COS_10_DEG)
            self.assertFalse(frames[v].umbilic)

    def test_icosahedron_vertices_are_umbilic(self):
        """Test that every icosahedron vertex is flagged umbilic."""
        frames = estimate_vertex_frames(make_icosphere(0))
        self.assertTrue(np.all(frames.umbilic))
        np.testing.assert_allclose(frames.curvature_directions, frames.tangent_u, atol=1e-12)

    def test_frames_are_orthonormal(self):
        """Test that normal, tangent and curvature directions are orthonormal."""
        frames = estimate_vertex_frames(make_icosphere(2))
        n, u, v, c = frames.normals, frames.tangent_u, frames.tangent_v, frames.curvature_directions
        for a in (n, u, v, c):
            np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-10)
        for a, b in ((n, u), (n, v), (u, v), (n, c)):
            np.testing.assert_allclose(np.sum(a * b, axis=1), 0.0, atol=1e-10)

    def test_sphere_normals_point_outward(self):
        """Test vertex normals on a sphere."""
        mesh = make_icosphere(2)
        frames = estimate_vertex_frames(mesh)
        self.assertTrue(np.all(np.sum(frames.normals * mesh.positions, axis=1) > 0.99))

    def test_too_few_neighbours(self):
        """Test rejection of vertices with fewer than three neighbours."""
        mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        with self.assertRaises(MeshError) as ctx:
            estimate_vertex_frames(mesh)
        self.assertIn('vertex 0', str(ctx.exception))

    def test_reference_switches_near_x_axis(self):
        """Test the fallback reference when the normal is close to the x axis."""
        u, v = tangent_basis(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]))
        np.testing.assert_allclose(u, [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]], atol=1e-12)
        np.testing.assert_allclose(v, [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]], atol=1e-12)


class TestPseudoCoords(unittest.TestCase):
    def test_extrinsic_raw_difference(self):
        """Test that extrinsic coordinates are the scaled difference x_i - x_j."""
        from surfparc.geometry.mesh import SurfaceGraph
        positions = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]])
        graph = SurfaceGraph(2, [0, 1], [1, 0], positions, np.full(2, np.sqrt(14.0)))
        pseudo = extrinsic_pseudo_coords(graph)
        np.testing.assert_allclose(pseudo.inverse(), [[-1.0, -2.0, -3.0], [1.0, 2.0, 3.0]], atol=1e-12)
        np.testing.assert_allclose(pseudo.values, [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])

    def test_zero_offset_maps_to_midpoint(self):
        """Test scaling of a symmetric offset range."""
        from surfparc.geometry.mesh import SurfaceGraph
        positions = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        rows, cols = [0, 0, 1, 1, 2, 2], [1, 2, 0, 2, 0, 1]
        graph = SurfaceGraph(3, rows, cols, positions, np.ones(6))
        pseudo = extrinsic_pseudo_coords(graph)
        # edge (0, 2) has x_i - x_j = 0 on the first axis, whose range is [-1, 1]
        self.assertAlmostEqual(pseudo.values[1, 0], 0.5, places=12)

    def test_extrinsic_antisymmetry(self):
        """Test that reversed edges mirror around the midpoint."""
        graph = build_surface_graph(make_icosphere(2))
        pseudo = extrinsic_pseudo_coords(graph)
        reverse = graph.reverse_index()
        np.testing.assert_allclose(pseudo.values + pseudo.values[reverse], 1.0, atol=1e-12)
        self.assertTrue(np.all((pseudo.values >= 0.0) & (pseudo.values <= 1.0)))

    def test_intrinsic_inverse_recovers_raw(self):
        """Test undoing the intrinsic scaling."""
        mesh = make_icosphere(2)
        graph = build_surface_graph(mesh)
        frames = estimate_vertex_frames(mesh)
        pseudo = intrinsic_pseudo_coords(graph, frames, mesh)
        raw = intrinsic_raw(graph, frames, mesh)
        np.testing.assert_allclose(pseudo.inverse(), raw, atol=1e-9)
        np.testing.assert_allclose(raw[:, 0], graph.rho, rtol=1e-12)
        self.assertTrue(np.all((raw[:, 1] >= 0.0) & (raw[:, 1] < TWO_PI)))

    def test_theta_measured_from_curvature_direction(self):
        """Test that theta is the angle to the curvature direction."""
        mesh = hexagon_fan()
        graph = build_surface_graph(mesh)
        frames = estimate_vertex_frames(mesh)
        pseudo = intrinsic_pseudo_coords(graph, frames, mesh)
        raw = intrinsic_raw(graph, frames, mesh)
        edge = {(int(i), int(j)): e for e, (i, j) in enumerate(zip(graph.rows, graph.cols))}
        # center direction is +x: ring vertex 1 sits at 0 rad, vertex 2 at 60 deg, vertex 4 at 180 deg
        self.assertAlmostEqual(raw[edge[(0, 1)], 1], 0.0, places=9)
        self.assertAlmostEqual(raw[edge[(0, 2)], 1], np.pi / 3.0, places=9)
        self.assertAlmostEqual(pseudo.values[edge[(0, 4)], 1], 0.5, places=9)

    def test_neighbour_along_normal_gets_zero_angle(self):
        """Test the zero-length tangent projection case."""
        mesh = hexagon_fan()
        graph = build_surface_graph(mesh)
        frames = estimate_vertex_frames(mesh)
        normals = frames.normals.copy()
        normals[0] = [1.0, 0.0, 0.0]
        tilted = VertexFrames(normals, frames.tangent_u, frames.tangent_v,
                              np.tile([0.0, 1.0, 0.0], (len(frames), 1)), frames.curvatures, frames.umbilic)
        with self.assertLogs('surfparc.geometry.pseudo_coords', level=logging.WARNING):
            raw = intrinsic_raw(graph, tilted, mesh)
        first = int(np.flatnonzero((graph.rows == 0) & (graph.cols == 1))[0])
        self.assertEqual(raw[first, 1], 0.0)

    def test_degenerate_column_maps_to_half(self):
        """Test that a constant column scales to 0.5."""
        values, lower, upper = scale_to_unit(np.array([[1.0, 2.0], [3.0, 2.0]]))
        np.testing.assert_allclose(values, [[0.0, 0.5], [1.0, 0.5]])
        np.testing.assert_allclose(lower, [1.0, 2.0])
        np.testing.assert_allclose(upper, [3.0, 2.0])
