"""
Versioned binary checkpoints.

Layout:
    8 bytes   magic b'SURFPARC'
    uint32    format version (little-endian)
    uint64    header length in bytes
    header    UTF-8 JSON: run config, config hash, seed, stage, optimizer
              states and the tensor table (name, shape) in storage order
    payload   every tensor as little-endian float64, in table order
"""
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from surfparc.ai.network import STAGES, ParcellationModel
from surfparc.ai.optim import SgdState
from surfparc.errors import DataError
from surfparc.run_config import RunConfig

logger = logging.getLogger(__name__)

MAGIC = b'SURFPARC'
FORMAT_VERSION = 1
COARSE_CHECKPOINT = 'coarse.ckpt'
REFINED_CHECKPOINT = 'refined.ckpt'
_PREFIX = struct.Struct('<8sIQ')


@dataclass
class Checkpoint:
    model: ParcellationModel
    run_config: RunConfig
    optimizers: Dict[str, SgdState] = field(default_factory=dict)


def save_checkpoint(path: str, model: ParcellationModel, optimizers: Optional[Dict[str, SgdState]] = None):
    state = model.state_dict()
    header = {
        'version': FORMAT_VERSION,
        'config': model.run_config.to_dict(),
        'config_hash': model.run_config.config_hash(),
        'seed': model.seed,
        'stage': model.stage,
        'optimizers': {name: opt.to_dict() for name, opt in sorted((optimizers or {}).items())},
        'tensors': [{'name': name, 'shape': list(value.shape)} for name, value in state.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')
    tmp = f'{path}.tmp'
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(tmp, 'wb') as f:
            f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)))
            f.write(header_bytes)
            for value in state.values():
                f.write(np.ascontiguousarray(value, dtype='<f8').tobytes())
        os.replace(tmp, path)
    except OSError as e:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise DataError(f'cannot write checkpoint {path}: {e.strerror}') from e
    logger.info(f"💾 Saved checkpoint {path} (stage={model.stage})")


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, 'rb') as f:
            blob = f.read()
    except OSError as e:
        raise DataError(f'cannot read checkpoint {path}: {e.strerror}') from e
    if len(blob) < _PREFIX.size:
        raise DataError(f'{path}: truncated checkpoint')
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise DataError(f'{path}: not a surfparc checkpoint')
    if version != FORMAT_VERSION:
        raise DataError(f'{path}: checkpoint format version {version}, expected {FORMAT_VERSION}')
    start = _PREFIX.size
    try:
        header = json.loads(blob[start:start + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f'{path}: corrupt checkpoint header') from e

    run_config = RunConfig.from_dict(header['config'])
    if run_config.config_hash() != header['config_hash']:
        raise DataError(f'{path}: config hash mismatch')
    if header['stage'] not in STAGES:
        raise DataError(f'{path}: unknown stage {header["stage"]!r}')

    offset = start + header_len
    state = {}
    for entry in header['tensors']:
        shape = tuple(entry['shape'])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise DataError(f'{path}: truncated tensor data for {entry["name"]}')
        values = np.frombuffer(blob, dtype='<f8', count=count, offset=offset)
        state[entry['name']] = values.reshape(shape).copy()
        offset = end
    if offset != len(blob):
        raise DataError(f'{path}: {len(blob) - offset} trailing bytes after tensor data')

    model = ParcellationModel(run_config, seed=header['seed'])
    model.load_state_dict(state)
    model.stage = header['stage']
    optimizers = {name: SgdState.from_dict(data) for name, data in header['optimizers'].items()}
    return Checkpoint(model, run_config, optimizers)
