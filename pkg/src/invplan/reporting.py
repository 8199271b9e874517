"""CSV and JSON writers/readers for fields, series and run reports."""
import json
import math
from pathlib import Path

import numpy as np

from .errors import BadGridSpec
from .pde_solver import RadialGrid, ValueField

__all__ = ['format_float', 'write_csv', 'read_csv', 'write_field_csv', 'read_field_csv',
           'write_series_csv', 'write_json', 'jsonable']

FIELD_HEADER = ('r', 'u', 'z', 'dz_dr', 'd2z_dr2')
SERIES_HEADER = ('t', 'mean', 'stderr')


def format_float(v):
    # 17 significant digits round-trips every double
    return '%.16e' % v


def write_csv(path, header, columns):
    cols = [np.asarray(c) for c in columns]
    n = len(cols[0])
    lines = [','.join(header)]
    for i in range(n):
        lines.append(','.join(format_float(c[i]) if np.issubdtype(c.dtype, np.floating)
                              else str(c[i]) for c in cols))
    Path(path).write_text('\n'.join(lines) + '\n', newline='\n')


def read_csv(path):
    """Header list and a dict of float columns."""
    lines = Path(path).read_text().strip().split('\n')
    header = lines[0].split(',')
    data = np.array([[float(v) for v in ln.split(',')] for ln in lines[1:]], ndmin=2)
    return header, {h: data[:, j] for j, h in enumerate(header)}


def write_field_csv(path, value_field):
    vf = value_field
    write_csv(path, FIELD_HEADER, [vf.grid.r, vf.u_values, vf.z_values, vf.z_r_values,
                                   vf.z_rr_values])


def read_field_csv(path):
    header, cols = read_csv(path)
    if tuple(header) != FIELD_HEADER:
        raise BadGridSpec(f"field CSV header must be {','.join(FIELD_HEADER)}, got {header}")
    r = cols['r']
    grid = RadialGrid(float(r[-1]), r.size)
    if r.size < 3 or r[0] != 0.0 or not np.allclose(r, grid.r, rtol=0, atol=1e-12 * r[-1]):
        raise BadGridSpec("field CSV radii must form a uniform grid starting at 0")
    return ValueField(grid, cols['z'], cols['dz_dr'], cols['d2z_dr2'], cols['u'])


def write_series_csv(path, t, mean, stderr):
    write_csv(path, SERIES_HEADER, [np.asarray(t, float), np.asarray(mean, float),
                                    np.asarray(stderr, float)])


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + '\n',
                          newline='\n')
