"""
The two-stage parcellation model.

Coarse stage: an intrinsic spline-conv stack and an extrinsic U-shape run in
parallel, their per-vertex outputs are concatenated and classified by an MLP.
Refinement stage: three intrinsic convolutions over
[coarse penultimate features | intrinsic mid-layer copy | xyz], all three
outputs concatenated before a second MLP.

Convolutions whose output feeds an MLP directly (the last intrinsic layer, the
last U-shape layer and the three refinement convolutions) have no activation.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from surfparc.ai.layers import ELU, IDENTITY, MlpCache, MlpStack
from surfparc.ai.losses import softmax
from surfparc.ai.spline_conv import BSplineBasis, SplineConvCache, SplineConvLayer
from surfparc.ai.subject import Subject
from surfparc.ai.tensor import Parameter
from surfparc.errors import ContractViolation
from surfparc.geometry.pseudo_coords import EXTRINSIC, INTRINSIC
from surfparc.run_config import CoarseNetConfig, RefineNetConfig, RunConfig

logger = logging.getLogger(__name__)

COARSE = 'coarse'
REFINE = 'refine'
STAGES = (COARSE, REFINE)


@dataclass
class CoarseOutput:
    logits: np.ndarray
    penultimate: np.ndarray
    mid: np.ndarray


@dataclass
class CoarseCache:
    intrinsic: List[SplineConvCache]
    encoders: List[SplineConvCache]
    bottleneck: SplineConvCache
    decoders: List[SplineConvCache]
    mlp: MlpCache
    subject: Subject


class CoarseNet:
    def __init__(self, cfg: CoarseNetConfig, num_labels: int, rng: np.random.Generator):
        self.cfg = cfg
        self.num_labels = num_labels
        self.intrinsic_basis = BSplineBasis.create(2, cfg.kernel_size, cfg.degree)
        self.extrinsic_basis = BSplineBasis.create(3, cfg.kernel_size, cfg.degree)

        def conv(cin, cout, basis, name, activation=ELU):
            return SplineConvLayer(cin, cout, basis, rng, activation=activation,
                                   root_weight=cfg.root_weight, bias=cfg.bias, name=name)

        # Layers whose output goes straight into the MLP stay linear
        def output_activation(i, count):
            return IDENTITY if i == count - 1 else ELU

        widths = [cfg.in_features] + list(cfg.intrinsic_widths)
        self.intrinsic = [conv(widths[i], widths[i + 1], self.intrinsic_basis, f'coarse.intrinsic.{i}',
                               output_activation(i, len(cfg.intrinsic_widths)))
                          for i in range(len(cfg.intrinsic_widths))]
        widths = [cfg.in_features] + list(cfg.encoder_widths)
        self.encoders = [conv(widths[i], widths[i + 1], self.extrinsic_basis, f'coarse.encoder.{i}')
                         for i in range(len(cfg.encoder_widths))]
        self.bottleneck = conv(widths[-1], cfg.bottleneck_width, self.extrinsic_basis, 'coarse.bottleneck',
                               ELU if cfg.decoder_widths else IDENTITY)
        widths = [cfg.bottleneck_width] + list(cfg.decoder_widths)
        self.decoders = [conv(widths[i], widths[i + 1], self.extrinsic_basis, f'coarse.decoder.{i}',
                              output_activation(i, len(cfg.decoder_widths)))
                         for i in range(len(cfg.decoder_widths))]
        mlp_in = cfg.intrinsic_widths[-1] + (cfg.decoder_widths or [cfg.bottleneck_width])[-1]
        self.mlp = MlpStack([mlp_in] + list(cfg.mlp_widths) + [num_labels], rng, name='coarse.mlp')

    @property
    def depth(self) -> int:
        return len(self.encoders)

    @property
    def penultimate_width(self) -> int:
        return self.mlp.widths[-2]

    @property
    def mid_width(self) -> int:
        return self.cfg.intrinsic_widths[self.cfg.mid_layer]

    def parameters(self) -> List[Parameter]:
        layers = self.intrinsic + self.encoders + [self.bottleneck] + self.decoders
        return [p for layer in layers for p in layer.parameters()] + self.mlp.parameters()

    def forward(self, subject: Subject) -> Tuple[CoarseOutput, CoarseCache]:
        if subject.features.shape[1] != self.cfg.in_features:
            raise ContractViolation(f'subject {subject.subject_id} has {subject.features.shape[1]} input '
                                    f'features, model expects {self.cfg.in_features}')
        if len(subject.hierarchy) < self.depth:
            raise ContractViolation(f'subject {subject.subject_id} has {len(subject.hierarchy)} pool levels, '
                                    f'U-shape needs {self.depth}')

        support = subject.support(INTRINSIC, 0, self.intrinsic_basis)
        h = subject.features
        intrinsic_caches = []
        mid = None
        for i, layer in enumerate(self.intrinsic):
            h, cache = layer.forward(support, h)
            intrinsic_caches.append(cache)
            if i == self.cfg.mid_layer:
                mid = h
        intrinsic_out = h

        h = subject.features
        skips, encoder_caches = [], []
        for d, layer in enumerate(self.encoders):
            h, cache = layer.forward(subject.support(EXTRINSIC, d, self.extrinsic_basis), h)
            encoder_caches.append(cache)
            skips.append(h)
            h = subject.hierarchy[d].pool(h)
        h, bottleneck_cache = self.bottleneck.forward(
            subject.support(EXTRINSIC, self.depth, self.extrinsic_basis), h)
        decoder_caches = []
        for i, layer in enumerate(self.decoders):
            d = self.depth - 1 - i
            h = subject.hierarchy[d].unpool(h)
            h, cache = layer.forward(subject.support(EXTRINSIC, d, self.extrinsic_basis), h)
            decoder_caches.append(cache)
            h = h + skips[d]

        mlp_cache = self.mlp.forward(np.concatenate([intrinsic_out, h], axis=1))
        out = CoarseOutput(logits=mlp_cache.logits, penultimate=mlp_cache.penultimate, mid=mid)
        cache = CoarseCache(intrinsic_caches, encoder_caches, bottleneck_cache, decoder_caches,
                            mlp_cache, subject)
        return out, cache

    def backward(self, cache: CoarseCache, grad_logits: Optional[np.ndarray],
                 grad_penultimate: Optional[np.ndarray] = None, grad_mid: Optional[np.ndarray] = None):
        grad_in = self.mlp.backward(cache.mlp, grad_logits, grad_penultimate)
        split = self.cfg.intrinsic_widths[-1]
        grad_intrinsic, g = grad_in[:, :split], grad_in[:, split:]

        subject = cache.subject
        grad_skips = [None] * self.depth
        for index in range(len(self.decoders) - 1, -1, -1):
            d = self.depth - 1 - index
            grad_skips[d] = g
            g = self.decoders[index].backward(cache.decoders[index], g)
            g = subject.hierarchy[d].unpool_backward(g)
        g = self.bottleneck.backward(cache.bottleneck, g)
        for d in range(self.depth - 1, -1, -1):
            g = subject.hierarchy[d].pool_backward(g) + grad_skips[d]
            g = self.encoders[d].backward(cache.encoders[d], g)

        g = grad_intrinsic
        for i in range(len(self.intrinsic) - 1, -1, -1):
            if i == self.cfg.mid_layer and grad_mid is not None:
                g = g + grad_mid
            g = self.intrinsic[i].backward(cache.intrinsic[i], g)


@dataclass
class RefineCache:
    convs: List[SplineConvCache]
    mlp: MlpCache
    splits: Tuple[int, int]


class RefineNet:
    def __init__(self, cfg: RefineNetConfig, penultimate_width: int, mid_width: int, num_labels: int,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.basis = BSplineBasis.create(2, cfg.kernel_size, cfg.degree)
        self.splits = (penultimate_width, penultimate_width + mid_width)
        widths = [penultimate_width + mid_width + 3] + list(cfg.conv_widths)
        self.convs = [
            SplineConvLayer(widths[i], widths[i + 1], self.basis, rng, activation=IDENTITY,
                            root_weight=cfg.root_weight, bias=cfg.bias, name=f'refine.conv.{i}')
            for i in range(len(cfg.conv_widths))
        ]
        self.mlp = MlpStack([sum(cfg.conv_widths)] + list(cfg.mlp_widths) + [num_labels], rng,
                            name='refine.mlp')

    def parameters(self) -> List[Parameter]:
        return [p for layer in self.convs for p in layer.parameters()] + self.mlp.parameters()

    def forward(self, subject: Subject, penultimate: np.ndarray,
                mid: np.ndarray) -> Tuple[np.ndarray, RefineCache]:
        if penultimate is None or mid is None:
            raise ContractViolation(
                'refinement needs the coarse penultimate features and the intrinsic mid copy')
        x = np.concatenate([penultimate, mid, subject.positions], axis=1)
        if x.shape[1] != self.convs[0].in_channels:
            raise ContractViolation(
                f'refinement input has {x.shape[1]} channels, expected {self.convs[0].in_channels}')
        support = subject.support(INTRINSIC, 0, self.basis)
        h = x
        outputs, caches = [], []
        for layer in self.convs:
            h, cache = layer.forward(support, h)
            outputs.append(h)
            caches.append(cache)
        mlp_cache = self.mlp.forward(np.concatenate(outputs, axis=1))
        return mlp_cache.logits, RefineCache(caches, mlp_cache, self.splits)

    def backward(self, cache: RefineCache, grad_logits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Returns the gradients wrt the penultimate and mid inputs."""
        grad_cat = self.mlp.backward(cache.mlp, grad_logits)
        bounds = np.cumsum([0] + list(self.cfg.conv_widths))
        grad_outputs = [grad_cat[:, bounds[i]:bounds[i + 1]] for i in range(len(self.convs))]
        g = grad_outputs[-1]
        for i in range(len(self.convs) - 1, -1, -1):
            g = self.convs[i].backward(cache.convs[i], g)
            if i > 0:
                g = g + grad_outputs[i - 1]
        first, second = cache.splits
        return g[:, :first], g[:, first:second]


class ParcellationModel:
    def __init__(self, run_config: RunConfig, seed: Optional[int] = None):
        self.run_config = run_config
        self.seed = run_config.seed if seed is None else seed
        rng = np.random.default_rng(self.seed)
        self.coarse = CoarseNet(run_config.coarse, run_config.num_labels, rng)
        self.refine = RefineNet(run_config.refine, self.coarse.penultimate_width, self.coarse.mid_width,
                                run_config.num_labels, rng)
        self.stage = COARSE

    @property
    def num_labels(self) -> int:
        return self.run_config.num_labels

    def parameters(self) -> List[Parameter]:
        return self.coarse.parameters() + self.refine.parameters()

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return OrderedDict((p.name, p.value.copy()) for p in self.parameters())

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        params = {p.name: p for p in self.parameters()}
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise ContractViolation(f'state mismatch: missing {missing[:3]}, unexpected {unexpected[:3]}')
        for name, value in state.items():
            if value.shape != params[name].shape:
                raise ContractViolation(
                    f'{name}: stored shape {value.shape}, model expects {params[name].shape}')
            params[name].value = np.array(value, dtype=np.float64)
            params[name].grad = np.zeros_like(params[name].value)


def coarse_forward(model: ParcellationModel, subject: Subject) -> CoarseOutput:
    out, _ = model.coarse.forward(subject)
    return out


def refine_forward(model: ParcellationModel, subject: Subject, penultimate: np.ndarray,
                   mid: np.ndarray) -> np.ndarray:
    logits, _ = model.refine.forward(subject, penultimate, mid)
    return logits


def stage_probabilities(model: ParcellationModel, subject: Subject,
                        stage: Optional[str] = None) -> np.ndarray:
    stage = model.stage if stage is None else stage
    if stage not in STAGES:
        raise ContractViolation(f'unknown stage {stage!r}')
    coarse = coarse_forward(model, subject)
    if stage == COARSE:
        return softmax(coarse.logits)
    return softmax(refine_forward(model, subject, coarse.penultimate, coarse.mid))


def predict(model: ParcellationModel, subject: Subject,
            stage: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-vertex argmax labels (lowest label wins ties) and probabilities."""
    probs = stage_probabilities(model, subject, stage)
    return np.argmax(probs, axis=1), probs
