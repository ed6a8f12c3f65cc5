import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lqgsphere import _kernels_py, kernels
from lqgsphere.errors import ConfigurationError
from lqgsphere.grids import CylinderGrid, PlanarGrid, SeedStream, fingerprint, grid_from_dict, replica_rng


def test_planar_grid_geometry():
    g = PlanarGrid(64, 2.0)
    assert g.cell_size == pytest.approx(4 / 64)
    assert g.shape == (64, 64)
    assert np.all(np.abs(g.centers[g.mask]) < 2.0)
    assert grid_from_dict(g.describe()) == g


def test_planar_grid_rejects_tiny_resolution():
    with pytest.raises(ConfigurationError):
        PlanarGrid(8)


def test_centered_cylinder_has_row_on_unit_circle():
    g = CylinderGrid.centered(5.0, 32)
    j = g.row_of(0.0)
    assert g.t[j] == pytest.approx(0.0, abs=1e-12)
    assert g.dt == pytest.approx(g.dtheta)
    assert np.allclose(g.t, -g.t[::-1])
    assert grid_from_dict(g.describe()) == g


def test_half_cylinder_starts_at_boundary():
    g = CylinderGrid.half(3.0, 16)
    assert g.t_min == 0.0
    assert g.t_max >= 3.0


def test_fingerprint_is_order_independent():
    assert fingerprint({"a": 1, "b": 2}) == fingerprint({"b": 2, "a": 1})
    assert fingerprint({"a": 1}) != fingerprint({"a": 2})


def test_replica_streams_are_reproducible_and_distinct():
    a = replica_rng(7, 3).standard_normal(5)
    b = replica_rng(7, 3).standard_normal(5)
    c = replica_rng(7, 4).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    s = SeedStream(7)
    i, g = s.spawn()
    assert i == 0 and np.array_equal(g.standard_normal(5), replica_rng(7, 0).standard_normal(5))


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@given(st.integers(1, 6), st.integers(1, 40), st.floats(0.0, 0.99))
def test_ar1_filter_matches_recursion(m, n, r):
    rng = np.random.default_rng(m * 100 + n)
    innov = rng.standard_normal((m, n))
    rho = np.full(m, r)
    x0 = rng.standard_normal(m)
    out = kernels.ar1_filter(innov, rho, x0)
    ref = np.empty_like(innov)
    prev = x0.copy()
    for j in range(n):
        prev = r * prev + innov[:, j]
        ref[:, j] = prev
    assert np.allclose(out, ref, atol=1e-10)


def test_compiled_and_python_kernels_agree(rng):
    try:
        from lqgsphere import _ckernels
    except ImportError:
        pytest.skip("extension not built")
    innov = rng.standard_normal((20, 30))
    rho = rng.uniform(0, 0.9, 20)
    x0 = rng.standard_normal(20)
    assert np.allclose(_ckernels.ar1_filter(innov, rho, x0), _kernels_py.ar1_filter(innov, rho, x0))
    vals = rng.standard_normal((10, 12))
    r = rng.uniform(0, 9, 50)
    c = rng.uniform(-3, 15, 50)
    for periodic in (True, False):
        assert np.allclose(_ckernels.bilinear(vals, r, c, periodic), _kernels_py.bilinear(vals, r, c, periodic))
    args = (np.zeros(16), np.zeros(16), 1.0, 2.0, 0.01, rng.standard_normal((16, 64)), rng.random((16, 64)))
    for a, b in zip(_ckernels.first_passage(*args), _kernels_py.first_passage(*args)):
        assert np.allclose(np.nan_to_num(a, nan=-1), np.nan_to_num(b, nan=-1))


def test_bilinear_exact_at_centers(rng):
    vals = rng.standard_normal((6, 8))
    r, c = np.meshgrid(np.arange(6.0), np.arange(8.0), indexing="ij")
    assert np.allclose(kernels.bilinear(vals, r.ravel(), c.ravel(), True), vals.ravel())


def test_first_passage_detects_certain_crossing():
    x, t, hit = kernels.first_passage(np.zeros(3), np.zeros(3), 100.0, 1.0, 0.1,
                                      np.zeros((3, 5)), np.ones((3, 5)))
    assert np.all(np.isfinite(hit))
    assert np.all(hit <= 0.1 + 1e-12)
    assert math.isclose(x[0], 1.0)
