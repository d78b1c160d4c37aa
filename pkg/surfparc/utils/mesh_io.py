"""
Plain-text mesh, feature and label files.

Readers validate counts and report the offending file; writers format floats
with repr() and replace the target atomically, so load -> save -> load is
bit-identical.
"""
import logging
import os
from typing import Dict, Iterable, Optional

import numpy as np

from surfparc.errors import DataError, MeshError
from surfparc.geometry.mesh import TriangleMesh

logger = logging.getLogger(__name__)

MESH_EXTENSIONS = ('.off', '.obj')


def atomic_write(path: str, lines: Iterable[str]):
    """Write to a temporary sibling, then move it into place."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    tmp = f'{path}.tmp'
    try:
        with open(tmp, 'w') as f:
            f.writelines(lines)
        os.replace(tmp, path)
    except OSError as e:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise DataError(f'cannot write {path}: {e.strerror}') from e


def _read_lines(path: str):
    try:
        with open(path, 'r') as f:
            return f.read().splitlines()
    except OSError as e:
        raise DataError(f'cannot read {path}: {e.strerror}') from e


def _float_row(values) -> str:
    return ' '.join(repr(float(v)) for v in values)


def _content_lines(lines):
    for line in lines:
        stripped = line.split('#', 1)[0].strip()
        if stripped:
            yield stripped


def read_off(path: str) -> TriangleMesh:
    tokens = ' '.join(_content_lines(_read_lines(path))).split()
    if not tokens or tokens[0] != 'OFF':
        raise MeshError(f'{path}: missing OFF header')
    rest = tokens[1:]
    try:
        n_vertices, n_faces = int(rest[0]), int(rest[1])
        cursor = 3
        positions = np.array(rest[cursor:cursor + 3 * n_vertices], dtype=np.float64).reshape(n_vertices, 3)
        cursor += 3 * n_vertices
        faces = []
        for face in range(n_faces):
            count = int(rest[cursor])
            if count != 3:
                raise MeshError(f'{path}: face {face} has {count} vertices; only triangles are supported')
            faces.append([int(x) for x in rest[cursor + 1:cursor + 4]])
            cursor += 4
    except MeshError:
        raise
    except (ValueError, IndexError) as e:
        raise MeshError(f'{path}: malformed OFF data ({e})') from e
    return TriangleMesh(positions, np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_off(mesh: TriangleMesh, path: str):
    lines = ['OFF\n', f'{mesh.num_vertices} {mesh.num_faces} 0\n']
    lines += [_float_row(p) + '\n' for p in mesh.positions]
    lines += [f'3 {a} {b} {c}\n' for a, b, c in mesh.faces]
    atomic_write(path, lines)


def _obj_index(token: str, n_vertices: int) -> int:
    index = int(token.split('/', 1)[0])
    return index - 1 if index > 0 else n_vertices + index


def read_obj(path: str) -> TriangleMesh:
    positions, faces = [], []
    for number, line in enumerate(_read_lines(path), start=1):
        parts = line.split('#', 1)[0].split()
        if not parts:
            continue
        try:
            if parts[0] == 'v':
                positions.append([float(x) for x in parts[1:4]])
            elif parts[0] == 'f':
                if len(parts) != 4:
                    raise MeshError(f'{path}:{number}: face has {len(parts) - 1} vertices; '
                                    f'only triangles are supported')
                faces.append([_obj_index(t, len(positions)) for t in parts[1:]])
        except ValueError as e:
            raise MeshError(f'{path}:{number}: malformed OBJ line ({e})') from e
    return TriangleMesh(np.array(positions, dtype=np.float64).reshape(-1, 3),
                        np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_obj(mesh: TriangleMesh, path: str):
    lines = ['v ' + _float_row(p) + '\n' for p in mesh.positions]
    lines += [f'f {a + 1} {b + 1} {c + 1}\n' for a, b, c in mesh.faces]
    atomic_write(path, lines)


def load_mesh(path: str) -> TriangleMesh:
    extension = os.path.splitext(path)[1].lower()
    if extension == '.off':
        return read_off(path)
    if extension == '.obj':
        return read_obj(path)
    raise DataError(f'{path}: unsupported mesh format {extension!r}, expected one of {MESH_EXTENSIONS}')


def save_mesh(mesh: TriangleMesh, path: str):
    extension = os.path.splitext(path)[1].lower()
    if extension == '.off':
        write_off(mesh, path)
    elif extension == '.obj':
        write_obj(mesh, path)
    else:
        raise DataError(f'{path}: unsupported mesh format {extension!r}, expected one of {MESH_EXTENSIONS}')


def read_features(path: str, expected_rows: Optional[int] = None) -> np.ndarray:
    """One whitespace-separated row of decimals per vertex."""
    rows = [line.split() for line in _read_lines(path) if line.strip()]
    if expected_rows is not None and len(rows) != expected_rows:
        raise DataError(f'{path}: expected {expected_rows} rows, found {len(rows)}')
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise DataError(f'{path}: rows have differing column counts {sorted(widths)}')
    try:
        return np.array(rows, dtype=np.float64).reshape(len(rows), -1)
    except ValueError as e:
        raise DataError(f'{path}: non-numeric feature value ({e})') from e


def write_features(features: np.ndarray, path: str):
    atomic_write(path, [_float_row(row) + '\n' for row in np.atleast_2d(features)])


def read_labels(path: str, expected_rows: Optional[int] = None,
                num_labels: Optional[int] = None) -> np.ndarray:
    """One non-negative integer per line."""
    values = [line.strip() for line in _read_lines(path) if line.strip()]
    if expected_rows is not None and len(values) != expected_rows:
        raise DataError(f'{path}: expected {expected_rows} rows, found {len(values)}')
    try:
        labels = np.array([int(v) for v in values], dtype=np.int64)
    except ValueError as e:
        raise DataError(f'{path}: non-integer label ({e})') from e
    if labels.size and labels.min() < 0:
        raise DataError(f'{path}: negative label {int(labels.min())}')
    if num_labels is not None and labels.size and labels.max() >= num_labels:
        raise DataError(f'{path}: label {int(labels.max())} outside [0, {num_labels})')
    return labels


def write_labels(labels: np.ndarray, path: str):
    atomic_write(path, [f'{int(v)}\n' for v in labels])


def write_vtk(mesh: TriangleMesh, path: str, labels: Optional[np.ndarray] = None,
              scalars: Optional[Dict[str, np.ndarray]] = None, title: str = 'surfparc'):
    """Legacy ASCII VTK polydata with per-vertex label and float scalars."""
    n = mesh.num_vertices
    lines = [
        '# vtk DataFile Version 3.0\n',
        f'{title}\n',
        'ASCII\n',
        'DATASET POLYDATA\n',
        f'POINTS {n} double\n',
    ]
    lines += [_float_row(p) + '\n' for p in mesh.positions]
    lines.append(f'POLYGONS {mesh.num_faces} {4 * mesh.num_faces}\n')
    lines += [f'3 {a} {b} {c}\n' for a, b, c in mesh.faces]
    point_data = []
    if labels is not None:
        if len(labels) != n:
            raise DataError(f'{path}: {len(labels)} labels for {n} vertices')
        point_data += ['SCALARS labels int 1\n', 'LOOKUP_TABLE default\n']
        point_data += [f'{int(v)}\n' for v in labels]
    for name, values in (scalars or {}).items():
        values = np.asarray(values, dtype=np.float64)
        if len(values) != n:
            raise DataError(f'{path}: scalar {name!r} has {len(values)} values for {n} vertices')
        width = 1 if values.ndim == 1 else values.shape[1]
        if not 1 <= width <= 4:
            raise DataError(f'{path}: scalar {name!r} has {width} components, VTK allows 1 to 4')
        point_data += [f'SCALARS {name} double {width}\n', 'LOOKUP_TABLE default\n']
        point_data += [_float_row(np.atleast_1d(row)) + '\n' for row in values]
    if point_data:
        lines.append(f'POINT_DATA {n}\n')
        lines += point_data
    atomic_write(path, lines)
