import unittest

import numpy as np

from conftest import graph_from_edges, grid_edges
from surfparc.ai.pooling import (
    UNIT, build_hierarchy, coarsen, graclus_match, pool_pair, unpool,
)
from surfparc.errors import ContractViolation
from surfparc.geometry.mesh import SurfaceGraph, build_surface_graph
from surfparc.geometry.synthetic import make_icosphere


def path_graph(n):
    return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)])


def edgeless_graph(n):
    positions = np.arange(3 * n, dtype=np.float64).reshape(n, 3)
    return SurfaceGraph(n, [], [], positions, np.zeros(0))


class TestGraclusMatch(unittest.TestCase):
    def test_path_pairs_in_index_order(self):
        """Test matching a path graph in index order."""
        level = graclus_match(path_graph(4), UNIT)
        np.testing.assert_array_equal(level.assignment, [0, 0, 1, 1])
        np.testing.assert_array_equal(level.members, [[0, 1], [2, 3]])

    def test_edgeless_graph_keeps_singletons(self):
        """Test that an edgeless graph keeps every vertex as a singleton."""
        level = graclus_match(edgeless_graph(5))
        np.testing.assert_array_equal(level.assignment, np.arange(5))
        np.testing.assert_array_equal(level.members[:, 1], -1)
        result = pool_pair(edgeless_graph(5), np.ones((5, 1)))
        self.assertEqual(result.graph.num_vertices, 5)

    def test_single_edge_collapses(self):
        """Test that one edge collapses to one vertex."""
        level = graclus_match(path_graph(2))
        self.assertEqual(level.num_coarse, 1)
        self.assertEqual(level.coarse_graph.num_edges, 0)

    def test_clusters_partition_fine_vertices(self):
        """Test that clusters partition the fine vertices."""
        graph = build_surface_graph(make_icosphere(3))
        level = graclus_match(graph, seed=11)
        members = level.members[level.members >= 0]
        np.testing.assert_array_equal(np.sort(members), np.arange(graph.num_vertices))
        self.assertTrue(set(level.cluster_sizes.tolist()) <= {1, 2})
        adjacency = graph.adjacency()
        for a, b in level.members:
            self.assertEqual(level.assignment[a], level.assignment[max(a, b)])
            if b >= 0:
                self.assertEqual(adjacency[a, b], 1.0)

    def test_matching_is_maximal(self):
        """Test that no two adjacent singletons remain."""
        graph = build_surface_graph(make_icosphere(2))
        level = graclus_match(graph, seed=3)
        singles = level.members[level.members[:, 1] < 0, 0]
        # no two unmatched vertices may be adjacent
        single_set = set(singles.tolist())
        for v in singles:
            self.assertFalse(single_set & set(graph.neighbours(v).tolist()))

    def test_seeded_matching_is_deterministic(self):
        """Test that the same seed gives the same matching."""
        graph = build_surface_graph(make_icosphere(3))
        first = graclus_match(graph, seed=5)
        second = graclus_match(graph, seed=5)
        np.testing.assert_array_equal(first.assignment, second.assignment)

    def test_explicit_weights_validated(self):
        """Test validation of explicit matching weights."""
        graph = path_graph(3)
        with self.assertRaises(ContractViolation):
            graclus_match(graph, np.ones(graph.num_edges + 1))
        with self.assertRaises(ContractViolation):
            graclus_match(graph, 'heaviest')


class TestCoarsen(unittest.TestCase):
    def test_features_sum_and_positions_average(self):
        """Test that coarsening sums features and averages positions."""
        graph = path_graph(4)
        level = graclus_match(graph, UNIT)
        features, positions, coarse = coarsen(level, np.array([[1.0], [2.0], [3.0], [4.0]]), graph.positions)
        np.testing.assert_allclose(features, [[3.0], [7.0]])
        np.testing.assert_allclose(positions[:, 0], [0.5, 2.5])
        self.assertEqual(list(zip(coarse.rows.tolist(), coarse.cols.tolist())), [(0, 1), (1, 0)])
        np.testing.assert_allclose(coarse.rho, [2.0, 2.0])

    def test_all_singletons_is_identity(self):
        """Test coarsening with every vertex a singleton."""
        graph = edgeless_graph(4)
        features = np.random.default_rng(0).normal(size=(4, 2))
        level = graclus_match(graph)
        pooled, positions, _ = coarsen(level, features, graph.positions)
        np.testing.assert_array_equal(pooled, features)
        np.testing.assert_array_equal(positions, graph.positions)

    def test_grid_reduces_fourfold(self):
        """Test that pool_pair roughly quarters a grid."""
        graph = graph_from_edges(16, grid_edges(4))
        result = pool_pair(graph, np.ones((16, 1)), weights=UNIT)
        self.assertEqual(result.levels[0].num_coarse, 8)
        self.assertEqual(result.graph.num_vertices, 4)
        np.testing.assert_allclose(result.features, 4.0)

    def test_pool_pair_bounds_and_mass(self):
        """Test coarse sizes and feature mass after pool_pair."""
        graph = build_surface_graph(make_icosphere(3))
        n = graph.num_vertices
        features = np.random.default_rng(1).normal(size=(n, 3))
        result = pool_pair(graph, features, seed=[7, 0])
        first = result.levels[0].num_coarse
        self.assertTrue(int(np.ceil(n / 2)) <= first <= n)
        self.assertTrue(int(np.ceil(n / 4)) <= result.graph.num_vertices <= first)
        np.testing.assert_allclose(result.features.sum(axis=0), features.sum(axis=0), atol=1e-12)
        reverse = result.graph.reverse_index()
        np.testing.assert_array_equal(result.graph.rows[reverse], result.graph.cols)

    def test_positions_length_checked(self):
        """Test rejection of a position array of the wrong length."""
        graph = path_graph(4)
        level = graclus_match(graph)
        with self.assertRaises(ContractViolation):
            coarsen(level, None, np.zeros((3, 3)))


class TestUnpool(unittest.TestCase):
    def test_copy_back(self):
        """Test that unpooling copies each coarse row to its members."""
        level = graclus_match(path_graph(4), UNIT)
        np.testing.assert_allclose(unpool(level, np.array([[1.5], [-2.0]])), [[1.5], [1.5], [-2.0], [-2.0]])

    def test_unpool_of_pool_scales_by_cluster_size(self):
        """Test that pooling then unpooling a constant scales by cluster size."""
        graph = build_surface_graph(make_icosphere(2))
        result = pool_pair(graph, None, seed=1)
        constant = np.full((graph.num_vertices, 1), 0.25)
        pooled = result.levels[1].pool(result.levels[0].pool(constant))
        restored = unpool(result.levels, pooled)
        sizes = unpool(result.levels, np.bincount(
            result.levels[1].assignment[result.levels[0].assignment])[:, None].astype(float))
        np.testing.assert_allclose(restored, 0.25 * sizes)

    def test_cluster_indicators(self):
        """Test the cluster indicator matrix."""
        level = graclus_match(build_surface_graph(make_icosphere(1)), seed=2)
        indicators = unpool(level, np.eye(level.num_coarse))
        np.testing.assert_array_equal(indicators, np.eye(level.num_coarse)[level.assignment])

    def test_shape_mismatch(self):
        """Test rejection of feature arrays of the wrong length."""
        level = graclus_match(path_graph(4), UNIT)
        with self.assertRaises(ContractViolation):
            unpool(level, np.zeros((3, 1)))

    def test_backward_passes_are_adjoint(self):
        """Test that pool and unpool backward passes are adjoint."""
        rng = np.random.default_rng(4)
        level = graclus_match(build_surface_graph(make_icosphere(1)), seed=4)
        fine = rng.normal(size=(level.num_fine, 2))
        coarse = rng.normal(size=(level.num_coarse, 2))
        self.assertAlmostEqual(np.sum(level.pool(fine) * coarse), np.sum(fine * level.pool_backward(coarse)))
        self.assertAlmostEqual(np.sum(level.unpool(coarse) * fine),
                               np.sum(coarse * level.unpool_backward(fine)))


def test_relabel_fine_matches_permuted_pooling():
    """Test reusing a hierarchy after relabelling fine vertices."""
    graph = build_surface_graph(make_icosphere(2))
    level = graclus_match(graph, seed=9)
    perm = np.random.default_rng(9).permutation(graph.num_vertices)
    features = np.random.default_rng(10).normal(size=(graph.num_vertices, 2))
    relabelled = level.relabel_fine(perm)
    np.testing.assert_allclose(relabelled.pool(features[perm]), level.pool(features))
    members = relabelled.members[relabelled.members >= 0]
    np.testing.assert_array_equal(np.sort(members), np.arange(graph.num_vertices))


def test_hierarchy_stages(sphere3):
    """Test the stacked levels of a hierarchy."""
    graph = build_surface_graph(sphere3)
    stages = build_hierarchy(graph, depth=2, seed=7)
    assert len(stages) == 2
    assert stages[0].num_fine == graph.num_vertices
    assert stages[1].num_fine == stages[0].num_coarse
    assert stages[1].num_coarse < stages[0].num_coarse < graph.num_vertices
    for stage in stages:
        assert stage.pseudo.num_edges == stage.graph.num_edges
        assert np.all((stage.pseudo.values >= 0.0) & (stage.pseudo.values <= 1.0))
    again = build_hierarchy(graph, depth=2, seed=7)
    np.testing.assert_array_equal(again[1].levels[1].assignment, stages[1].levels[1].assignment)


def test_dump_lists_assignment(tmp_path):
    """Test the debug dump of a level's assignment."""
    level = graclus_match(path_graph(4), UNIT)
    path = tmp_path / 'clusters.txt'
    level.dump(str(path))
    assert path.read_text().split() == ['0', '0', '1', '1']
