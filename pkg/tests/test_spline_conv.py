import unittest

import numpy as np
import pytest

from surfparc.ai.gradcheck import TOLERANCES, check_spline_conv, random_graph, random_pseudo
from surfparc.ai.layers import ELU, IDENTITY
from surfparc.ai.spline_conv import (
    BSplineBasis, KernelSupport, SplineConvLayer, aggregate_backward, aggregate_forward, basis_eval,
    kernel_eval,
)
from surfparc.errors import ContractViolation
from surfparc.geometry.mesh import SurfaceGraph
from surfparc.geometry.pseudo_coords import EXTRINSIC, EdgePseudoCoords


def cox_de_boor(i, degree, t, knots):
    """Textbook recursion, 0/0 taken as 0; half-open spans so t must be < 1."""
    if degree == 0:
        return 1.0 if knots[i] <= t < knots[i + 1] else 0.0
    left_den = knots[i + degree] - knots[i]
    right_den = knots[i + degree + 1] - knots[i + 1]
    left = 0.0 if left_den == 0 else (t - knots[i]) / left_den * cox_de_boor(i, degree - 1, t, knots)
    right = 0.0 if right_den == 0 else \
        (knots[i + degree + 1] - t) / right_den * cox_de_boor(i + 1, degree - 1, t, knots)
    return left + right


def dense_basis(basis, u):
    """B_p(u) for every control p, from the recursion above."""
    per_axis = []
    for axis, size in enumerate(basis.kernel_size):
        knots = basis.knots(size)
        per_axis.append(np.array([cox_de_boor(i, basis.degree, u[axis], knots) for i in range(size)]))
    out = per_axis[0]
    for values in per_axis[1:]:
        out = np.outer(out, values).ravel()
    return out


def dense_conv(layer, graph, pseudo, features):
    """Triple-loop evaluation of the convolution."""
    out = np.zeros((graph.num_vertices, layer.out_channels))
    for i in range(graph.num_vertices):
        neighbours = np.flatnonzero(graph.rows == i)
        acc = np.zeros(layer.in_channels)
        for e in neighbours:
            x = float(dense_basis(layer.basis, pseudo.values[e]) @ layer.kernel.value)
            acc += x * features[graph.cols[e]]
        if len(neighbours):
            acc /= len(neighbours)
        pre = acc @ layer.weight.value
        if layer.root is not None:
            pre = pre + features[i] @ layer.root.value
        if layer.bias is not None:
            pre = pre + layer.bias.value
        out[i] = pre if layer.activation == IDENTITY else np.where(pre > 0, pre, np.expm1(np.minimum(pre, 0)))
    return out


def two_vertex_graph():
    positions = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    return SurfaceGraph(2, [0, 1], [1, 0], positions, np.ones(2))


def pseudo_1d(values):
    values = np.asarray(values, dtype=np.float64).reshape(-1, 1)
    return EdgePseudoCoords(EXTRINSIC, values, np.zeros(1), np.ones(1))


class TestBSplineBasis(unittest.TestCase):
    def test_linear_example(self):
        """Test the linear basis at a point between two controls."""
        basis = BSplineBasis.create(1, 2, degree=1)
        pairs = basis_eval(basis, [0.25])
        self.assertEqual([p for p, _ in pairs], [0, 1])
        self.assertAlmostEqual(pairs[0][1], 0.75, places=12)
        self.assertAlmostEqual(pairs[1][1], 0.25, places=12)

    def test_corner_hits_first_control(self):
        """Test that u = 0 selects only the first control."""
        basis = BSplineBasis.create(2, (2, 2), 1)
        self.assertEqual(basis.num_controls, 4)
        self.assertEqual(basis_eval(basis, [0.0, 0.0]), [(0, 1.0)])

    def test_right_end_hits_last_control(self):
        """Test that u = 1 selects only the last control."""
        basis = BSplineBasis.create(1, 5, degree=1)
        self.assertEqual(basis_eval(basis, [1.0]), [(4, 1.0)])
        cubic = BSplineBasis.create(1, 6, degree=3)
        pairs = basis_eval(cubic, [1.0])
        self.assertEqual(pairs[-1][0], 5)
        self.assertAlmostEqual(pairs[-1][1], 1.0, places=12)

    def test_partition_of_unity(self):
        """Test that the basis values sum to 1."""
        rng = np.random.default_rng(0)
        for dim in (1, 2, 3):
            for degree in (0, 1, 2, 3):
                basis = BSplineBasis.create(dim, degree + 2, degree)
                u = rng.random((10_000, dim))
                u[:5] = 0.0
                u[5:10] = 1.0
                index, value = basis.evaluate(u)
                self.assertEqual(index.shape[1], (degree + 1) ** dim)
                np.testing.assert_allclose(value.sum(axis=1), 1.0, atol=1e-9)
                self.assertTrue(np.all(value >= -1e-15))
                self.assertTrue(np.all((index >= 0) & (index < basis.num_controls)))

    def test_matches_recursive_definition(self):
        """Test the basis against the Cox-de Boor recursion."""
        rng = np.random.default_rng(1)
        for dim, size, degree in ((1, 4, 1), (2, 5, 2), (3, 4, 3), (2, (3, 6), 1)):
            basis = BSplineBasis.create(dim, size, degree)
            for u in rng.random((50, dim)):
                dense = np.zeros(basis.num_controls)
                for p, b in basis_eval(basis, u):
                    dense[p] = b
                np.testing.assert_allclose(dense, dense_basis(basis, u), atol=1e-12)

    def test_locality(self):
        """Test that at most (m + 1) ** k basis values are non-zero."""
        basis = BSplineBasis.create(2, 5, degree=1)
        rng = np.random.default_rng(2)
        for u in rng.random((100, 2)) * 0.9:
            moved = u + np.array([0.05, 0.0])
            before, after = dict(basis_eval(basis, u)), dict(basis_eval(basis, moved))
            self.assertLessEqual(len(before), basis.support_size)
            self.assertLessEqual(len(after), basis.support_size)
            changed = np.flatnonzero(np.abs(dense_basis(basis, u) - dense_basis(basis, moved)) > 1e-15)
            self.assertTrue(set(changed.tolist()) <= set(before) | set(after))

    def test_out_of_range_pseudo_coordinates(self):
        """Test rejection of pseudo-coordinates outside [0, 1]."""
        basis = BSplineBasis.create(2, 3, 1)
        with self.assertRaises(ContractViolation):
            basis.evaluate(np.array([[0.5, 1.5]]))
        with self.assertRaises(ContractViolation):
            basis.evaluate(np.array([[0.5, 0.5, 0.5]]))

    def test_invalid_degree_and_size(self):
        """Test rejection of invalid degrees and kernel sizes."""
        with self.assertRaises(ContractViolation):
            BSplineBasis.create(1, 6, degree=4)
        with self.assertRaises(ContractViolation):
            BSplineBasis.create(1, 2, degree=2)


class TestSplineConvLayer(unittest.TestCase):
    def make_layer(self, in_channels, out_channels, basis, activation=IDENTITY, root=True, bias=True, seed=0):
        return SplineConvLayer(in_channels, out_channels, basis, np.random.default_rng(seed),
                               activation=activation, root_weight=root, bias=bias)

    def test_kernel_eval(self):
        """Test evaluating a layer's kernel at a point."""
        layer = self.make_layer(1, 1, BSplineBasis.create(1, 2, 1))
        layer.kernel.value = np.array([2.0, 4.0])
        self.assertAlmostEqual(kernel_eval(layer, [0.25]), 2.5, places=12)
        layer.kernel.value = np.full(2, 3.0)
        self.assertAlmostEqual(kernel_eval(layer, [0.8]), 3.0, places=12)
        layer.kernel.value = np.zeros(2)
        self.assertEqual(kernel_eval(layer, [0.8]), 0.0)

    def test_single_neighbour_identity(self):
        """Test a single neighbour with identity weights."""
        basis = BSplineBasis.create(1, 3, 1)
        layer = self.make_layer(2, 2, basis, root=False, bias=False)
        layer.kernel.value = np.ones(3)
        layer.weight.value = np.eye(2)
        support = KernelSupport.build(two_vertex_graph(), pseudo_1d([0.4, 0.7]), basis)
        out, _ = aggregate_forward(layer, support, np.array([[0.0, 0.0], [1.0, 2.0]]))
        np.testing.assert_allclose(out[0], [1.0, 2.0], atol=1e-12)

    def test_opposite_neighbours_cancel(self):
        """Test that opposite neighbour features cancel."""
        basis = BSplineBasis.create(1, 3, 1)
        layer = self.make_layer(2, 3, basis, root=False, bias=False)
        positions = np.zeros((3, 3))
        graph = SurfaceGraph(3, [0, 0, 1, 2], [1, 2, 0, 0], positions, np.ones(4))
        support = KernelSupport.build(graph, pseudo_1d([0.3, 0.3, 0.6, 0.6]), basis)
        f = np.array([0.7, -1.3])
        out, _ = aggregate_forward(layer, support, np.array([[5.0, 5.0], f, -f]))
        np.testing.assert_allclose(out[0], 0.0, atol=1e-12)

    def test_matches_dense_oracle(self):
        """Test the convolution against a dense triple loop."""
        rng = np.random.default_rng(3)
        for instance in range(50):
            dim = int(rng.integers(1, 4))
            degree = int(rng.integers(1, 3))
            basis = BSplineBasis.create(dim, int(rng.integers(degree + 1, degree + 4)), degree)
            graph = random_graph(rng, int(rng.integers(1, 9)))
            pseudo = random_pseudo(rng, graph.num_edges, dim)
            layer = self.make_layer(int(rng.integers(1, 4)), int(rng.integers(1, 4)), basis,
                                    activation=ELU if instance % 2 else IDENTITY, seed=instance)
            layer.bias.value = rng.normal(size=layer.out_channels)
            features = rng.normal(size=(graph.num_vertices, layer.in_channels))
            out, _ = layer.forward(KernelSupport.build(graph, pseudo, basis), features)
            np.testing.assert_allclose(out, dense_conv(layer, graph, pseudo, features), atol=1e-10)

    def test_constant_kernel_ignores_geometry(self):
        """Test that a constant kernel ignores pseudo-coordinates."""
        rng = np.random.default_rng(4)
        basis = BSplineBasis.create(3, 4, 2)
        graph = random_graph(rng, 7, edge_prob=0.7)
        layer = self.make_layer(3, 2, basis, activation=ELU)
        layer.kernel.value = np.full(basis.num_controls, 1.7)
        features = rng.normal(size=(7, 3))
        first, _ = layer.forward(KernelSupport.build(graph, random_pseudo(rng, graph.num_edges, 3), basis),
                                 features)
        second, _ = layer.forward(KernelSupport.build(graph, random_pseudo(rng, graph.num_edges, 3), basis),
                                  features)
        np.testing.assert_allclose(first, second, atol=1e-12)

    def test_linear_in_features(self):
        """Test that the identity-activation convolution is linear in its input."""
        rng = np.random.default_rng(5)
        basis = BSplineBasis.create(2, 4, 1)
        graph = random_graph(rng, 6, edge_prob=0.6)
        support = KernelSupport.build(graph, random_pseudo(rng, graph.num_edges, 2), basis)
        layer = self.make_layer(3, 4, basis, bias=False)
        f1, f2 = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
        combined, _ = layer.forward(support, 2.0 * f1 - 0.5 * f2)
        out1, _ = layer.forward(support, f1)
        out2, _ = layer.forward(support, f2)
        np.testing.assert_allclose(combined, 2.0 * out1 - 0.5 * out2, atol=1e-12)

    def test_zero_upstream_gradient(self):
        """Test that a zero upstream gradient gives zero gradients."""
        rng = np.random.default_rng(6)
        basis = BSplineBasis.create(2, 3, 1)
        graph = random_graph(rng, 5, edge_prob=0.8)
        support = KernelSupport.build(graph, random_pseudo(rng, graph.num_edges, 2), basis)
        layer = self.make_layer(2, 2, basis, activation=ELU)
        out, cache = layer.forward(support, rng.normal(size=(5, 2)))
        grad_features = aggregate_backward(layer, cache, np.zeros_like(out))
        np.testing.assert_array_equal(grad_features, 0.0)
        for p in layer.parameters():
            np.testing.assert_array_equal(p.grad, 0.0)

    def test_single_edge_kernel_gradient(self):
        """Test the kernel gradient of a single edge."""
        basis = BSplineBasis.create(1, 4, 1)
        layer = self.make_layer(1, 1, basis, activation=ELU, root=False, bias=False)
        layer.weight.value = np.array([[0.8]])
        u = 0.3
        support = KernelSupport.build(two_vertex_graph(), pseudo_1d([u, 0.6]), basis)
        features = np.array([[0.5], [-1.2]])
        out, cache = layer.forward(support, features)
        layer.backward(cache, np.array([[1.0], [0.0]]))
        pre = cache.pre[0, 0]
        slope = 1.0 if pre > 0 else np.exp(pre)
        expected = dense_basis(basis, [u]) * features[1, 0] * 0.8 * slope
        np.testing.assert_allclose(layer.kernel.grad, expected, atol=1e-12)

    def test_isolated_vertex_needs_root(self):
        """Test that isolated vertices need the root term."""
        basis = BSplineBasis.create(1, 3, 1)
        graph = SurfaceGraph(3, [0, 1], [1, 0], np.zeros((3, 3)), np.ones(2))
        support = KernelSupport.build(graph, pseudo_1d([0.2, 0.8]), basis)
        layer = self.make_layer(1, 1, basis, root=False)
        with self.assertRaises(ContractViolation) as ctx:
            layer.forward(support, np.ones((3, 1)))
        self.assertIn('vertex 2', str(ctx.exception))
        with_root = self.make_layer(1, 1, basis, root=True)
        out, _ = with_root.forward(support, np.ones((3, 1)))
        self.assertEqual(out.shape, (3, 1))

    def test_edgeless_graph_uses_root_term_only(self):
        """Test that vertices without neighbours get only the root and bias terms."""
        basis = BSplineBasis.create(2, 3, 1)
        for n in (1, 3):
            graph = SurfaceGraph(n, [], [], np.zeros((n, 3)), np.zeros(0))
            pseudo = EdgePseudoCoords(EXTRINSIC, np.zeros((0, 2)), np.zeros(2), np.ones(2))
            support = KernelSupport.build(graph, pseudo, basis)
            self.assertEqual(support.basis_index.shape, (0, basis.support_size))
            layer = self.make_layer(2, 3, basis, seed=n)
            layer.bias.value = np.arange(3.0)
            features = np.arange(2.0 * n).reshape(n, 2)
            out, cache = layer.forward(support, features)
            np.testing.assert_allclose(out, features @ layer.root.value + layer.bias.value, atol=1e-12)
            np.testing.assert_allclose(out, dense_conv(layer, graph, pseudo, features), atol=1e-12)
            grad = layer.backward(cache, np.ones((n, 3)))
            np.testing.assert_allclose(grad, np.ones((n, 3)) @ layer.root.value.T, atol=1e-12)
            np.testing.assert_array_equal(layer.kernel.grad, 0.0)

    def test_shape_contracts(self):
        """Test the feature, gradient and basis shape checks."""
        basis = BSplineBasis.create(1, 3, 1)
        support = KernelSupport.build(two_vertex_graph(), pseudo_1d([0.2, 0.8]), basis)
        layer = self.make_layer(2, 1, basis)
        with self.assertRaises(ContractViolation):
            layer.forward(support, np.ones((2, 3)))
        out, cache = layer.forward(support, np.ones((2, 2)))
        with self.assertRaises(ContractViolation):
            layer.backward(cache, np.ones((2, 2)))
        other = self.make_layer(2, 1, BSplineBasis.create(1, 4, 1))
        with self.assertRaises(ContractViolation):
            other.forward(support, np.ones((2, 2)))


def test_finite_difference_gradients():
    """Test convolution gradients against finite differences."""
    rng = np.random.default_rng(0)
    errors = [check_spline_conv(rng) for _ in range(20)]
    assert max(errors) < TOLERANCES['spline_conv']


@pytest.mark.parametrize('degree', [1, 2, 3])
def test_support_values_sum_to_one_on_edges(degree):
    """Test that every edge's basis values sum to 1."""
    rng = np.random.default_rng(degree)
    basis = BSplineBasis.create(2, degree + 3, degree)
    graph = random_graph(rng, 8, edge_prob=0.6)
    support = KernelSupport.build(graph, random_pseudo(rng, graph.num_edges, 2), basis)
    np.testing.assert_allclose(support.basis_value.sum(axis=1), 1.0, atol=1e-12)
