"""Counter-based normal streams.

Every path owns a SplitMix64 stream keyed by (master seed, path index): the
j-th uniform of path i is mix64(key_i + (j + 1) * GOLDEN), and normals come in
pairs from the Marsaglia polar method applied to consecutive uniforms. Path i
therefore sees the same noise no matter how many other paths run or in which
order.
"""
import math

import numpy as np
from numba import njit

__all__ = ['master_key', 'path_key', 'path_normals']

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_PATH_SALT = np.uint64(0xD1B54A32D192ED03)
_TWO_M53 = 2.0 ** -53


def master_key(master_seed):
    """64-bit stream key derived from an integer seed."""
    return np.random.SeedSequence(int(master_seed)).generate_state(1, dtype=np.uint64)[0]


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def path_key(key, path):
    return mix64(key ^ mix64(np.uint64(path) * _PATH_SALT + GOLDEN))


@njit(cache=True)
def uniform_at(pkey, j):
    """j-th uniform in (0, 1) of a path stream."""
    x = mix64(pkey + (np.uint64(j) + np.uint64(1)) * GOLDEN)
    return ((x >> _S11) + 0.5) * _TWO_M53


@njit(cache=True)
def normal_pair(pkey, j):
    """Two independent normals starting at uniform index j; returns (a, b, next j)."""
    while True:
        u = 2.0 * uniform_at(pkey, j) - 1.0
        v = 2.0 * uniform_at(pkey, j + 1) - 1.0
        j += 2
        s = u * u + v * v
        if 0.0 < s < 1.0:
            f = math.sqrt(-2.0 * math.log(s) / s)
            return u * f, v * f, j


@njit(cache=True)
def _fill_normals(key, path, count, out):
    pk = path_key(key, path)
    n = 0
    j = 0
    while n < count:
        a, b, j = normal_pair(pk, j)
        out[n] = a
        if n + 1 < count:
            out[n + 1] = b
        n += 2


def path_normals(master_seed, path, count):
    """The first `count` standard normals of one path's stream."""
    out = np.empty(count)
    _fill_normals(master_key(master_seed), int(path), int(count), out)
    return out
