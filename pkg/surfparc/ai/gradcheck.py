"""
Finite-difference checks of every hand-written backward pass.

Each check builds a small random instance, compares the analytic gradient of
a scalar loss with central differences (step 1e-5) and reports the
norm-based relative error ||a - n|| / max(||a||, ||n||).
"""
import logging
from typing import Callable, Dict, List, Optional

import numpy as np

from surfparc.ai.layers import ELU, IDENTITY, Linear
from surfparc.ai.losses import dice_score, softmax, softmax_nll
from surfparc.ai.network import ParcellationModel
from surfparc.ai.spline_conv import BSplineBasis, KernelSupport, SplineConvLayer
from surfparc.ai.subject import Subject
from surfparc.ai.tensor import Parameter
from surfparc.ai.training import refine_step
from surfparc.geometry.mesh import SurfaceGraph
from surfparc.geometry.pseudo_coords import EXTRINSIC, EdgePseudoCoords
from surfparc.geometry.synthetic import make_icosphere, synth_labels_voronoi
from surfparc.run_config import CoarseNetConfig, RefineNetConfig, RunConfig

logger = logging.getLogger(__name__)

STEP = 1e-5
TOLERANCES = {
    'spline_conv': 1e-4,
    'linear': 1e-6,
    'softmax_nll': 1e-6,
    'dice': 1e-5,
    'coarse_network': 1e-3,
    'refine_network': 1e-3,
}


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(np.ravel(analytic) - np.ravel(numeric)) / scale)


def numeric_gradient(loss: Callable[[], float], array: np.ndarray, h: float = STEP,
                     indices: Optional[np.ndarray] = None) -> np.ndarray:
    """Central differences of loss() wrt entries of `array`, perturbed in place."""
    flat = array.reshape(-1)
    indices = np.arange(flat.size) if indices is None else indices
    grad = np.zeros(len(indices))
    for k, i in enumerate(indices):
        original = flat[i]
        flat[i] = original + h
        plus = loss()
        flat[i] = original - h
        minus = loss()
        flat[i] = original
        grad[k] = (plus - minus) / (2.0 * h)
    return grad


def random_graph(rng: np.random.Generator, num_vertices: int, edge_prob: float = 0.5) -> SurfaceGraph:
    """Small symmetric random graph without self-loops."""
    upper = np.triu(rng.random((num_vertices, num_vertices)) < edge_prob, k=1)
    dense = upper | upper.T
    rows, cols = np.nonzero(dense)
    positions = rng.normal(size=(num_vertices, 3))
    return SurfaceGraph(num_vertices, rows, cols, positions,
                        np.linalg.norm(positions[cols] - positions[rows], axis=1))


def random_pseudo(rng: np.random.Generator, num_edges: int, dim: int) -> EdgePseudoCoords:
    return EdgePseudoCoords(EXTRINSIC, rng.random((num_edges, dim)), np.zeros(dim), np.ones(dim))


def check_spline_conv(rng: np.random.Generator) -> float:
    dim = int(rng.integers(1, 4))
    degree = int(rng.integers(1, 3))
    basis = BSplineBasis.create(dim, int(rng.integers(degree + 1, degree + 3)), degree)
    graph = random_graph(rng, int(rng.integers(3, 8)))
    support = KernelSupport.build(graph, random_pseudo(rng, graph.num_edges, dim), basis)
    layer = SplineConvLayer(int(rng.integers(1, 4)), int(rng.integers(1, 4)), basis, rng,
                            activation=ELU if rng.random() < 0.5 else IDENTITY)
    layer.bias.value = rng.normal(size=layer.bias.shape)
    features = rng.normal(size=(graph.num_vertices, layer.in_channels))
    weights = rng.normal(size=(graph.num_vertices, layer.out_channels))

    def loss():
        out, _ = layer.forward(support, features)
        return float(np.sum(out * weights))

    out, cache = layer.forward(support, features)
    grad_features = layer.backward(cache, weights)
    analytic = [p.grad.ravel() for p in layer.parameters()] + [grad_features.ravel()]
    numeric = [numeric_gradient(loss, p.value) for p in layer.parameters()]
    numeric.append(numeric_gradient(loss, features))
    return relative_error(np.concatenate(analytic), np.concatenate(numeric))


def check_linear(rng: np.random.Generator) -> float:
    layer = Linear(5, 4, rng)
    layer.bias.value = rng.normal(size=4)
    x = rng.normal(size=(6, 5))
    weights = rng.normal(size=(6, 4))

    def loss():
        return float(np.sum(layer.forward(x) * weights))

    grad_x = layer.backward(x, weights)
    analytic = np.concatenate([layer.weight.grad.ravel(), layer.bias.grad.ravel(), grad_x.ravel()])
    numeric = np.concatenate([numeric_gradient(loss, layer.weight.value),
                              numeric_gradient(loss, layer.bias.value),
                              numeric_gradient(loss, x)])
    return relative_error(analytic, numeric)


def check_softmax_nll(rng: np.random.Generator) -> float:
    n, num_labels = int(rng.integers(2, 8)), int(rng.integers(2, 6))
    logits = rng.normal(size=(n, num_labels))
    labels = rng.integers(0, num_labels, size=n)
    _, _, grad = softmax_nll(logits, labels)
    numeric = numeric_gradient(lambda: softmax_nll(logits, labels)[0], logits)
    return relative_error(grad, numeric)


def check_dice(rng: np.random.Generator) -> float:
    n, num_labels = int(rng.integers(3, 10)), int(rng.integers(2, 6))
    truth = softmax(rng.normal(size=(n, num_labels)) * 3.0)
    pred = softmax(rng.normal(size=(n, num_labels)))
    _, grad = dice_score(truth, pred)
    # pred entries are perturbed independently, so rows leave the simplex
    numeric = numeric_gradient(lambda: dice_score(truth, pred, validate=False)[0], pred)
    return relative_error(grad, numeric)


def tiny_run_config(num_labels: int = 3) -> RunConfig:
    return RunConfig(
        coarse=CoarseNetConfig(intrinsic_widths=[4, 4, 4], encoder_widths=[4, 4], bottleneck_width=4,
                               decoder_widths=[4, 4], mlp_widths=[4, 4], kernel_size=3),
        refine=RefineNetConfig(conv_widths=[4, 4, 4], mlp_widths=[4], kernel_size=3, lam=2.0),
        num_labels=num_labels,
    ).validate()


def tiny_subject(seed: int, num_labels: int = 3) -> Subject:
    mesh = make_icosphere(1)
    labels, features = synth_labels_voronoi(mesh, num_labels, seed=seed)
    return Subject.build(f'gradcheck_{seed}', mesh, features, labels, seed=seed)


def _sampled_check(params: List[Parameter], loss: Callable[[], float], rng: np.random.Generator,
                   count: int) -> float:
    sizes = np.array([p.size for p in params])
    owners = rng.choice(len(params), size=count, p=sizes / sizes.sum())
    analytic, numeric = [], []
    for owner in owners:
        p = params[owner]
        index = int(rng.integers(p.size))
        analytic.append(p.grad.reshape(-1)[index])
        numeric.append(numeric_gradient(loss, p.value, indices=np.array([index]))[0])
    return relative_error(np.array(analytic), np.array(numeric))


def check_coarse_network(rng: np.random.Generator, samples: int = 50) -> float:
    seed = int(rng.integers(1 << 30))
    model = ParcellationModel(tiny_run_config(), seed=seed)
    subject = tiny_subject(seed)

    def loss():
        out, _ = model.coarse.forward(subject)
        return softmax_nll(out.logits, subject.labels)[0]

    model.zero_grad()
    out, cache = model.coarse.forward(subject)
    _, _, grad = softmax_nll(out.logits, subject.labels)
    model.coarse.backward(cache, grad)
    return _sampled_check(model.coarse.parameters(), loss, rng, samples)


def check_refine_network(rng: np.random.Generator, samples: int = 50) -> float:
    seed = int(rng.integers(1 << 30))
    model = ParcellationModel(tiny_run_config(), seed=seed)
    subject = tiny_subject(seed)
    lam = model.run_config.lam

    def loss():
        out, _ = model.coarse.forward(subject)
        logits, _ = model.refine.forward(subject, out.penultimate, out.mid)
        nll, prob, _ = softmax_nll(logits, subject.labels)
        truth = np.eye(model.num_labels)[subject.labels]
        return nll - lam * dice_score(truth, prob, validate=False)[0]

    model.zero_grad()
    refine_step(model, subject, lam)
    return _sampled_check(model.parameters(), loss, rng, samples)


LAYER_CHECKS = {
    'spline_conv': check_spline_conv,
    'linear': check_linear,
    'softmax_nll': check_softmax_nll,
    'dice': check_dice,
}
NETWORK_CHECKS = {
    'coarse_network': check_coarse_network,
    'refine_network': check_refine_network,
}


def run_suite(instances: int = 20, seed: int = 0, networks: bool = True) -> Dict[str, float]:
    """Maximum relative error per check over `instances` random instances."""
    rng = np.random.default_rng(seed)
    results = {}
    for name, check in LAYER_CHECKS.items():
        results[name] = max(check(rng) for _ in range(instances))
    if networks:
        for name, check in NETWORK_CHECKS.items():
            results[name] = check(rng)
    for name, error in results.items():
        status = '✅' if error < TOLERANCES[name] else '❌'
        logger.info(f"{status} {name}: max relative error {error:.3e} (tolerance {TOLERANCES[name]:.0e})")
    return results


def failures(results: Dict[str, float]) -> List[str]:
    return [name for name, error in results.items() if not error < TOLERANCES[name]]
