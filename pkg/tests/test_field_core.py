import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lqgsphere.errors import ConfigurationError, GeometryError, SingularityError
from lqgsphere.field_core import (BackgroundMeasure, Field, angular_variance, circle_average,
                                  circle_average_values, circle_average_weights, dirichlet_green_disk,
                                  dirichlet_sampler, green_at_infinity, green_function, radial_angular_split,
                                  regularized_log_kernel, sample_cylinder_batch, sample_cylinder_gff,
                                  sample_dirichlet_gff, sample_pinned_whole_plane_gff, spherical_density,
                                  pullback_to_cylinder)
from lqgsphere.grids import CylinderGrid, PlanarGrid

coord = st.floats(-3, 3, allow_nan=False)


@given(coord, coord, coord, coord)
def test_green_symmetric(a, b, c, d):
    x, y = complex(a, b), complex(c, d)
    if abs(x - y) < 1e-6:
        return
    for rho in (BackgroundMeasure.spherical(), BackgroundMeasure.circle()):
        assert green_function(rho, x, y) == green_function(rho, y, x)


def test_green_circle_closed_form():
    assert green_function(BackgroundMeasure.circle(), 2, 3) == pytest.approx(math.log(6), abs=1e-12)


def test_green_spherical_value_at_antipodes():
    # m(z) = -log(1+|z|^2)/2 and theta = -1/2 give -log 2 + log 2 - 1/2
    assert green_function(BackgroundMeasure.spherical(), 1, -1) == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize("x", [0.3 + 0.1j, 1.5, -2 + 1j])
def test_green_integrates_to_zero_against_background(x):
    rho = BackgroundMeasure.spherical()
    # polar quadrature, log-spaced in r to resolve both the singularity and the tail
    u = np.linspace(-12, 12, 4001)
    r = np.exp(u)
    th = np.linspace(0, 2 * np.pi, 513)[:-1]
    z = r[:, None] * np.exp(1j * th)[None, :]
    z = z + 1e-9 * (z == x)
    g = green_function(rho, x, z)
    integrand = (g * spherical_density(z)).mean(axis=1) * 2 * np.pi * r ** 2
    val = np.trapz(integrand, u) if hasattr(np, "trapz") else np.trapezoid(integrand, u)
    assert abs(val) < 5e-3


def test_background_potentials_match_definition():
    rho = BackgroundMeasure.spherical()
    custom = BackgroundMeasure("custom", density=spherical_density, extent=30, nodes=600)
    z = np.array([0.0, 0.5, 1 + 1j, 3.0])
    assert np.allclose(custom.log_potential(z), rho.log_potential(z), atol=5e-3)
    assert custom.theta == pytest.approx(rho.theta, abs=1e-2)
    assert BackgroundMeasure.circle().theta == 0.0


def test_green_singular_on_diagonal():
    with pytest.raises(SingularityError):
        green_function(BackgroundMeasure.circle(), 0.5, 0.5)


def test_green_at_infinity_is_limit():
    z = 0.4 - 0.2j
    for rho in (BackgroundMeasure.spherical(), BackgroundMeasure.circle()):
        assert green_function(rho, z, 1e7j) == pytest.approx(float(green_at_infinity(rho, z)), abs=1e-6)


def test_unknown_background_kind():
    with pytest.raises(ConfigurationError):
        BackgroundMeasure("uniform")


def test_dirichlet_green_vanishes_on_boundary():
    y = 0.3 + 0.2j
    x = np.exp(1j * np.linspace(0, 6, 7))
    assert np.allclose(dirichlet_green_disk(x, y), 0, atol=1e-12)
    assert dirichlet_green_disk(0, 0.5) == pytest.approx(math.log(2))


def test_dirichlet_field_deterministic_and_zero_outside():
    g = PlanarGrid(32)
    a = sample_dirichlet_gff(g, 5)
    b = sample_dirichlet_gff(g, 5)
    assert np.array_equal(a.values, b.values)
    assert np.all(a.values[~g.mask] == 0)
    assert np.all(np.isfinite(a.values))


def test_lattice_covariance_matches_samples():
    g = PlanarGrid(32)
    s = dirichlet_sampler(g)
    w = np.stack([circle_average_weights(g, 0, 0.4), circle_average_weights(g, 0.5, 0.2)])
    exact = s.exact_covariance(w)
    x = s.sample(np.random.default_rng(0), 4000)
    ca = np.stack([circle_average_values(x, g, 0, 0.4), circle_average_values(x, g, 0.5, 0.2)], axis=1)
    emp = ca.T @ ca / len(ca)
    assert np.allclose(emp, exact, atol=0.06)


def test_circle_average_weights_match_values(rng):
    g = PlanarGrid(32)
    v = rng.standard_normal(g.shape)
    w = circle_average_weights(g, 0.1j, 0.3)
    assert (w * v).sum() == pytest.approx(circle_average(Field(g, v), 0.1j, 0.3))


def test_circle_average_rejects_bad_radius():
    g = PlanarGrid(32)
    f = Field(g, np.zeros(g.shape))
    with pytest.raises(GeometryError):
        circle_average(f, 0, 0.01)
    with pytest.raises(GeometryError):
        circle_average(f, 0.5, 0.9)


def test_pinned_field_has_zero_background_average():
    g = PlanarGrid(64, 8.0)
    f = sample_pinned_whole_plane_gff(g, BackgroundMeasure.spherical(), 3)
    assert BackgroundMeasure.spherical().average(f) == pytest.approx(0, abs=1e-10)
    f = sample_pinned_whole_plane_gff(g, BackgroundMeasure.circle(), 3)
    assert circle_average(f, 0, 1.0) == pytest.approx(0, abs=1e-10)


def test_cylinder_circle_mean_zero(small_window):
    f = sample_cylinder_gff(small_window, 1)
    assert circle_average(f, 0, 1.0) == pytest.approx(0, abs=1e-10)
    assert f.pinning == "circle-mean-zero"


def test_zero_boundary_cylinder_starts_small():
    g = CylinderGrid.half(4.0, 32)
    x = sample_cylinder_batch(g, 400, 0, "zero-boundary")
    v = x.var(axis=(0, 2))
    # modes of frequency k saturate over t ~ 1/k, so the first row keeps only part of the angular variance
    assert v[0] < 0.6 * angular_variance(g)
    assert np.all(np.diff(v[:6]) > 0)


def test_cylinder_point_variance_matches_modes(small_window):
    x = sample_cylinder_batch(small_window, 400, 2)
    j = small_window.row_of(0.0)
    ang = x[:, j, :] - x[:, j, :].mean(axis=1, keepdims=True)
    assert ang.var() == pytest.approx(angular_variance(small_window), rel=0.08)


def test_regularized_kernel_far_field(small_window):
    w = 0.5 + 0.2j
    k = regularized_log_kernel(small_window, w)
    z = small_window.centers
    far = np.abs(z - w) > 0.5
    assert np.allclose(k[far], -np.log(np.abs(z - w))[far], atol=0.05)
    assert np.array_equal(regularized_log_kernel(small_window, 0), np.broadcast_to(small_window.t[:, None],
                                                                                     small_window.shape))


def test_radial_angular_split_reconstructs(small_window):
    f = sample_cylinder_gff(small_window, 4)
    s = radial_angular_split(f)
    assert np.allclose(s.reconstruct(), f.values)
    assert np.allclose(s.angular.values.mean(axis=1), 0, atol=1e-12)


def test_split_needs_cylinder():
    g = PlanarGrid(16)
    with pytest.raises(GeometryError):
        radial_angular_split(Field(g, np.zeros(g.shape)))


def test_pullback_recovers_smooth_function():
    g = PlanarGrid(128, 4.0)
    f = Field(g, g.centers.real.copy(), "modulo-constant")
    cyl = CylinderGrid(-1.0, 1.0, 16, 32)
    p = pullback_to_cylinder(f, cyl)
    assert np.allclose(p.values, cyl.centers.real, atol=1e-9)


def test_field_shape_checked():
    with pytest.raises(GeometryError):
        Field(PlanarGrid(16), np.zeros((3, 3)))


def test_circle_average_of_constant():
    g = PlanarGrid(64)
    f = Field(g, np.full(g.shape, 2.5))
    assert circle_average(f, 0.1 + 0.2j, 0.3) == pytest.approx(2.5, abs=1e-12)


def test_circle_average_of_log_singularity():
    g = PlanarGrid(256, 2.0)
    z = g.centers
    f = Field(g, -1.3 * np.log(np.maximum(np.abs(z), 1e-12)))
    for r in (0.25, 0.5, 1.0):
        assert circle_average(f, 0, r) == pytest.approx(-1.3 * math.log(r), abs=1e-3)


def test_split_of_pure_modes(small_window):
    g = small_window
    radial = Field(g, np.broadcast_to(np.sin(g.t)[:, None], g.shape).copy())
    s = radial_angular_split(radial)
    assert np.allclose(s.angular.values, 0, atol=1e-12)
    wave = Field(g, np.broadcast_to(np.cos(g.theta)[None, :], g.shape).copy())
    assert np.allclose(radial_angular_split(wave).radial, 0, atol=1e-12)


def test_angular_field_has_zero_circle_means(small_window):
    from lqgsphere.field_core import sample_angular_gff

    f = sample_angular_gff(small_window, 7)
    assert np.allclose(f.values.mean(axis=1), 0, atol=1e-12)
