"""
Run configuration for surfparc.

A run is fully determined by this configuration, the dataset manifest and the
seed. Configurations round-trip through JSON files kept under config/runs/.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

from surfparc.errors import ConfigError


@dataclass
class CoarseNetConfig:
    """Widths of the coarse network: intrinsic stack, extrinsic U-shape and MLP."""

    in_features: int = 3
    intrinsic_widths: List[int] = field(default_factory=lambda: [32, 64, 64])
    encoder_widths: List[int] = field(default_factory=lambda: [32, 64])
    bottleneck_width: int = 128
    decoder_widths: List[int] = field(default_factory=lambda: [64, 32])
    mlp_widths: List[int] = field(default_factory=lambda: [64, 32])
    degree: int = 1
    kernel_size: int = 5
    root_weight: bool = True
    bias: bool = True

    @property
    def mid_layer(self) -> int:
        # The intrinsic layer whose output is copied into the refinement input
        return len(self.intrinsic_widths) // 2

    def validate(self):
        _check_kernel(self.degree, self.kernel_size)
        if self.in_features < 1 or not self.intrinsic_widths or not self.mlp_widths:
            raise ConfigError('coarse network needs input features, intrinsic layers and an MLP')
        if len(self.encoder_widths) != len(self.decoder_widths):
            raise ConfigError('U-shape must have one decoder level per encoder level')
        if list(reversed(self.encoder_widths)) != list(self.decoder_widths):
            raise ConfigError(
                f'decoder widths {self.decoder_widths} must mirror encoder widths {self.encoder_widths}'
            )
        if min(self.intrinsic_widths + self.encoder_widths + self.mlp_widths + [self.bottleneck_width]) < 1:
            raise ConfigError('channel widths must be positive')

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict):
        return cls(**data)


@dataclass
class RefineNetConfig:
    """Refinement network: exactly three intrinsic convolutions, skip concat, MLP."""

    conv_widths: List[int] = field(default_factory=lambda: [64, 64, 64])
    mlp_widths: List[int] = field(default_factory=lambda: [64])
    lam: float = 10.0
    degree: int = 1
    kernel_size: int = 5
    root_weight: bool = True
    bias: bool = True

    def validate(self):
        _check_kernel(self.degree, self.kernel_size)
        if len(self.conv_widths) != 3:
            raise ConfigError(
                f'refinement uses exactly 3 intrinsic convolutions, got {len(self.conv_widths)}')
        if self.lam < 0:
            raise ConfigError(f'lambda must be non-negative, got {self.lam}')
        if min(self.conv_widths + self.mlp_widths) < 1:
            raise ConfigError('channel widths must be positive')

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict):
        return cls(**data)


@dataclass
class ScheduleConfig:
    """
    Two-stage learning rates, momentum, decay and epoch counts.

    Rates are per SGD step and one step is taken per training subject.
    `decay_interval` counts epochs.
    """

    coarse_lr: float = 0.01
    refine_coarse_lr: float = 0.0001
    refine_lr: float = 0.005
    momentum: float = 0.9
    decay_factor: float = 0.5
    decay_interval: int = 100
    coarse_epochs: int = 200
    refine_epochs: int = 100

    def validate(self):
        for name in ('coarse_lr', 'refine_coarse_lr', 'refine_lr'):
            if getattr(self, name) <= 0:
                raise ConfigError(f'{name} must be positive, got {getattr(self, name)}')
        if not 0 <= self.momentum < 1:
            raise ConfigError(f'momentum must be in [0, 1), got {self.momentum}')
        if not 0 < self.decay_factor <= 1:
            raise ConfigError(f'decay_factor must be in (0, 1], got {self.decay_factor}')
        if self.decay_interval < 1:
            raise ConfigError('decay_interval must be at least 1')
        if self.coarse_epochs < 0 or self.refine_epochs < 0:
            raise ConfigError('epoch counts must be non-negative')

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict):
        return cls(**data)


@dataclass
class RunConfig:
    """Everything a training or evaluation run needs besides the data."""

    coarse: CoarseNetConfig = field(default_factory=CoarseNetConfig)
    refine: RefineNetConfig = field(default_factory=RefineNetConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    num_labels: int = 8
    hops: int = 1
    folds: int = 5
    seed: int = 7
    output_dir: str = 'runs/default'

    @property
    def lam(self) -> float:
        return self.refine.lam

    def validate(self) -> 'RunConfig':
        self.coarse.validate()
        self.refine.validate()
        self.schedule.validate()
        if self.num_labels < 1:
            raise ConfigError(f'num_labels must be positive, got {self.num_labels}')
        if self.hops < 1:
            raise ConfigError(f'hops must be at least 1, got {self.hops}')
        if self.folds < 2:
            raise ConfigError(f'folds must be at least 2, got {self.folds}')
        return self

    def to_dict(self) -> Dict:
        return {
            'coarse': self.coarse.to_dict(),
            'refine': self.refine.to_dict(),
            'schedule': self.schedule.to_dict(),
            'num_labels': self.num_labels,
            'hops': self.hops,
            'folds': self.folds,
            'seed': self.seed,
            'output_dir': self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'RunConfig':
        data = dict(data)
        try:
            return cls(
                coarse=CoarseNetConfig.from_dict(data.pop('coarse', {})),
                refine=RefineNetConfig.from_dict(data.pop('refine', {})),
                schedule=ScheduleConfig.from_dict(data.pop('schedule', {})),
                **data,
            ).validate()
        except TypeError as e:
            raise ConfigError(f'unknown or malformed run configuration key: {e}') from e

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.md5(canonical.encode()).hexdigest()

    def save_to_file(self, filepath: str):
        """Save configuration to JSON file."""
        directory = os.path.dirname(filepath)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(filepath, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write('\n')

    @classmethod
    def load_from_file(cls, filepath: str) -> 'RunConfig':
        """Load configuration from JSON file."""
        try:
            with open(filepath, 'r') as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(f'cannot read run configuration {filepath}: {e.strerror}') from e
        except json.JSONDecodeError as e:
            raise ConfigError(f'run configuration {filepath} is not valid JSON: {e}') from e
        return cls.from_dict(data)


def resolve_output_dir(run_config: RunConfig, override: Optional[str] = None,
                       env_override: Optional[str] = None) -> str:
    """CLI flag beats the environment, which beats the run file."""
    return override or env_override or run_config.output_dir


def _check_kernel(degree: int, kernel_size: int):
    if not 1 <= degree <= 3:
        raise ConfigError(f'B-spline degree must be in [1, 3], got {degree}')
    if kernel_size < degree + 1:
        raise ConfigError(f'kernel size {kernel_size} must be at least degree + 1 = {degree + 1}')
