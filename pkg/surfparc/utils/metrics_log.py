"""
Append-only metrics log: one `key=value` record per line, fixed field order.

Floats are written with repr() so identical runs give identical bytes.
"""
import os
from dataclasses import dataclass
from typing import List, Optional


@dataclass
class EpochMetrics:
    epoch: int
    stage: str
    loss: float
    dice: float
    nll: Optional[float] = None
    dice_loss: Optional[float] = None

    def to_line(self) -> str:
        fields = [f'epoch={self.epoch}', f'stage={self.stage}', f'loss={self.loss!r}', f'dice={self.dice!r}']
        if self.nll is not None:
            fields.append(f'nll={self.nll!r}')
        if self.dice_loss is not None:
            fields.append(f'soft_dice={self.dice_loss!r}')
        return ' '.join(fields)

    @classmethod
    def from_line(cls, line: str) -> 'EpochMetrics':
        values = dict(item.split('=', 1) for item in line.split())
        return cls(
            epoch=int(values['epoch']),
            stage=values['stage'],
            loss=float(values['loss']),
            dice=float(values['dice']),
            nll=float(values['nll']) if 'nll' in values else None,
            dice_loss=float(values['soft_dice']) if 'soft_dice' in values else None,
        )


class MetricsLog:
    def __init__(self, path: str, truncate: bool = True):
        self.path = path
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        if truncate:
            open(path, 'w').close()

    def append(self, record: EpochMetrics):
        with open(self.path, 'a') as f:
            f.write(record.to_line() + '\n')


def read_metrics(path: str) -> List[EpochMetrics]:
    with open(path) as f:
        return [EpochMetrics.from_line(line) for line in f if line.strip()]
