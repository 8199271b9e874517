import numpy as np
from scipy import stats

from invplan.rng import master_key, path_key, path_normals, uniform_at


def test_stream_is_reproducible():
    np.testing.assert_array_equal(path_normals(7, 3, 100), path_normals(7, 3, 100))


def test_prefix_property():
    np.testing.assert_array_equal(path_normals(7, 3, 101)[:40], path_normals(7, 3, 40))


def test_seeds_and_paths_differ():
    a = path_normals(1, 0, 50)
    assert not np.array_equal(a, path_normals(2, 0, 50))
    assert not np.array_equal(a, path_normals(1, 1, 50))


def test_uniforms_in_open_interval():
    pk = path_key(master_key(0), 0)
    u = np.array([uniform_at(pk, j) for j in range(20000)])
    assert np.all((u > 0) & (u < 1))
    assert stats.kstest(u, 'uniform').pvalue > 1e-3


def test_normals_distribution():
    z = np.concatenate([path_normals(11, i, 2000) for i in range(10)])
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1.0) < 0.03
    assert stats.kstest(z, 'norm').pvalue > 1e-3


def test_paths_are_uncorrelated():
    Z = np.array([path_normals(5, i, 4000) for i in range(40)])
    C = np.corrcoef(Z)
    off = C[~np.eye(40, dtype=bool)]
    # off-diagonal correlations of independent streams have sd 1/sqrt(4000)
    assert np.max(np.abs(off)) < 5 / np.sqrt(4000)
    lag = np.corrcoef(Z[0, :-1], Z[0, 1:])[0, 1]
    assert abs(lag) < 5 / np.sqrt(4000)
