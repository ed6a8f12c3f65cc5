import math

import numpy as np
import pytest
from scipy import stats

from lqgsphere.chaos import Measure, default_probes, gmc_measure, normalize
from lqgsphere.dms import (bessel_sphere_batch, dms_three_point_sample, hitting_time_selftest, inverse_gaussian,
                           limiting_grid, sample_bessel_radial, sample_limiting_batch, sample_limiting_sphere,
                           sample_quantum_point, translate_to_window)
from lqgsphere.errors import (BudgetError, ConfigurationError, DegenerateMeasureError, ParameterError,
                              UnsupportedRegimeError)
from lqgsphere.field_core import sample_cylinder_gff
from lqgsphere.grids import CylinderGrid, PlanarGrid

SQRT2 = math.sqrt(2)


def bes3_hitting_times(n, rng, dt=1e-4):
    """First time a 3-d Brownian motion from 0 leaves the unit ball."""
    x = np.zeros((n, 3))
    t = np.zeros(n)
    live = np.ones(n, bool)
    while live.any():
        x[live] += rng.standard_normal((live.sum(), 3)) * math.sqrt(dt)
        t[live] += dt
        live &= np.einsum("ij,ij->i", x, x) < 1
    return t


# --- radial paths ----------------------------------------------------------

def test_bessel_regime_enforced(small_window):
    with pytest.raises(UnsupportedRegimeError):
        sample_bessel_radial(SQRT2, (0.5, 2.0), small_window, 0)
    with pytest.raises(ConfigurationError):
        sample_bessel_radial(1.7, (2.0, 0.5), small_window, 0)


def test_bessel_paths_quadratic_variation_and_maximum():
    g = CylinderGrid.centered(12.0, 128)
    paths = sample_bessel_radial(1.7, (0.5, 2.0), g, 3, 200)
    qv = np.mean([np.sum(np.diff(p.X) ** 2) / (p.t[-1] - p.t[0]) for p in paths])
    assert qv == pytest.approx(1.0, rel=0.05)
    center = g.row_of(0.0)
    for p in paths:
        assert abs(int(np.argmax(p.X)) - center) <= 1
        assert np.all(np.isfinite(p.X))
    # decay toward both ends
    assert np.mean([p.X[0] for p in paths]) < -2 and np.mean([p.X[-1] for p in paths]) < -2


def test_pure_gravity_excursion_matches_brownian_excursion():
    # at gamma^2 = 8/3 the pre-transform path is a Brownian excursion of height 1;
    # by Williams' decomposition its duration is a sum of two independent BES(3) exit times
    g = CylinderGrid.centered(12.0, 128)
    paths = sample_bessel_radial(math.sqrt(8 / 3), (0.5, 2.0), g, 2, 500)
    dur = np.array([p.excursion_time[-1] + p.excursion_time[0] for p in paths])
    assert all(p.excursion.max() == 1.0 for p in paths)
    rng = np.random.default_rng(99)
    oracle = bes3_hitting_times(500, rng) + bes3_hitting_times(500, rng)
    assert stats.ks_2samp(1 / np.sqrt(dur), 1 / np.sqrt(oracle)).pvalue > 0.01


def test_bessel_sphere_weights_positive(small_window):
    out = bessel_sphere_batch(1.7, 0.3, small_window, np.random.default_rng(0), 5)
    assert all(w > 0 and np.isfinite(w) for _, _, w in out)


def test_bessel_radial_angular_independence():
    g = CylinderGrid.centered(8.0, 32)
    rng = np.random.default_rng(5)
    n = 400
    out = bessel_sphere_batch(1.7, 0.3, g, rng, n)
    j = g.row_of(0.0)
    # log mass minus the radial part is gamma times the angular field
    ang = np.array([(lm[j + 3] - lm[j + 3].mean()) for lm, _, _ in out])[:, 5]
    rad = np.array([p.X[j + 3] for _, p, _ in out])
    c = np.cov(rad, ang)[0, 1]
    se = math.sqrt(rad.var() * ang.var() / n)
    assert abs(c) < 3 * se


# --- limiting procedure ----------------------------------------------------

def test_limiting_window_and_maxima_embedding():
    window = CylinderGrid.centered(16.0, 32)
    j0 = window.row_of(0.0)
    for seed in range(4):
        smp, st = sample_limiting_sphere(SQRT2, 1.0, 0.3, None, seed, window=window, n_theta=32)
        assert math.exp(-SQRT2 * 0.3) <= smp.total <= math.exp(SQRT2 * 0.3)
        assert smp.measure.total == pytest.approx(1.0, abs=1e-12)
        assert smp.embedding == "maxima"
        rows = smp.measure.log_mass.mean(axis=1)
        assert abs(int(np.nanargmax(np.where(np.isfinite(rows), rows, -np.inf))) - j0) <= 1
        assert st.accepted == 1 and st.attempts >= 1


def test_limiting_accepted_batch_in_window():
    g = limiting_grid(SQRT2, 1.0, 32)
    acc, st = sample_limiting_batch(SQRT2, 1.0, 0.3, g, 5, np.random.default_rng(1), batch=16)
    for logm, _, total in acc:
        assert math.exp(-SQRT2 * 0.3) <= total <= math.exp(SQRT2 * 0.3)
        assert np.exp(logm).sum() == pytest.approx(total)
    assert 0 < st.rate <= 1


def rate_over_attempts(C, attempts=200, seed=0):
    g = limiting_grid(SQRT2, C, 32)
    with pytest.raises(BudgetError) as exc:
        sample_limiting_batch(SQRT2, C, 0.3, g, 10 ** 6, np.random.default_rng(seed), batch=attempts,
                              max_attempts=attempts)
    return exc.value.diagnostics["rate"]


def test_acceptance_rate_non_increasing_in_C():
    rates = [rate_over_attempts(C) for C in (1.0, 2.0, 3.0)]
    assert rates[0] >= rates[1] >= rates[2] > 0


def test_limiting_parameter_errors():
    g = limiting_grid(SQRT2, 1.0, 32)
    with pytest.raises(ParameterError):
        sample_limiting_batch(SQRT2, 0.0, 0.3, g, 1, 0)
    with pytest.raises(ParameterError):
        sample_limiting_batch(2.5, 1.0, 0.3, g, 1, 0)


def test_min_rate_floor_raises():
    g = limiting_grid(SQRT2, 3.0, 32)
    with pytest.raises(BudgetError) as exc:
        sample_limiting_batch(SQRT2, 3.0, 0.3, g, 100, np.random.default_rng(0), batch=16, min_rate=0.9)
    assert exc.value.diagnostics["attempts"] >= 320


# --- quantum points and re-embedding -----------------------------------------

def test_point_mass_measure():
    g = CylinderGrid.centered(2.0, 16)
    m = np.zeros(g.shape)
    m[3, 5] = 2.0
    for s in range(5):
        p = sample_quantum_point(Measure.from_masses(g, m), s)
        assert (p.row, p.col) == (3, 5)


def test_uniform_measure_chi_square():
    g = PlanarGrid(16)
    masses = np.where(g.mask, 1.0, 0.0)
    meas = Measure.from_masses(g, masses)
    rng = np.random.default_rng(8)
    counts = np.zeros(g.shape)
    for _ in range(10000):
        p = sample_quantum_point(meas, rng)
        counts[p.row, p.col] += 1
    obs = counts[g.mask]
    assert stats.chisquare(obs).pvalue > 0.001
    assert counts[~g.mask].sum() == 0


def test_zero_measure_point():
    g = CylinderGrid.centered(2.0, 16)
    with pytest.raises(DegenerateMeasureError):
        sample_quantum_point(Measure.from_masses(g, np.zeros(g.shape)), 0)


def test_translation_preserves_mass_multiset(window):
    meas = normalize(gmc_measure(sample_cylinder_gff(window, 4), 1.2))
    src = window
    row, col = src.row_of(0.0) + 3, 7
    out, clipped = translate_to_window(meas.log_mass, src, row, col, window)
    kept = np.sort(np.exp(out[np.isfinite(out)]))
    assert clipped >= 0
    assert kept.sum() + clipped == pytest.approx(1.0, rel=1e-12)
    # shifting back recovers the original cells that stayed inside
    back, _ = translate_to_window(out, window, window.row_of(0.0) - 3, -7 % window.n_theta, window)
    fin = np.isfinite(back)
    assert np.allclose(back[fin], meas.log_mass[fin])


def test_translation_requires_matching_cells(window, small_window):
    with pytest.raises(ConfigurationError):
        translate_to_window(np.zeros(window.shape), window, 0, 0, small_window)


def test_three_point_third_point_at_one():
    window = CylinderGrid.centered(16.0, 32)
    e = dms_three_point_sample(SQRT2, 1.0, 0.3, window, 6, 3, default_probes(), keep_samples=True)
    j0 = window.row_of(0.0)
    for s in e.samples:
        assert s.embedding == "mobius-(0,1,inf)"
        assert np.isfinite(s.measure.log_mass[j0, 0])
        assert s.measure.total == pytest.approx(1.0, abs=1e-12)
    assert np.all(e.weights == 1.0)
    assert 0 < e.manifest["acceptance_rate"] <= 1


def test_three_point_reproducible_and_exchangeable():
    window = CylinderGrid.centered(16.0, 32)
    a = dms_three_point_sample(SQRT2, 1.0, 0.3, window, 40, 11, default_probes())
    b = dms_three_point_sample(SQRT2, 1.0, 0.3, window, 40, 11, default_probes())
    assert np.array_equal(a.observables, b.observables)
    # permutation test on the first probe: first half vs second half
    x = a.observables[:, 0]
    obs = abs(x[:20].mean() - x[20:].mean())
    rng = np.random.default_rng(0)
    perm = [abs(np.diff([p[:20].mean(), p[20:].mean()])[0]) for p in (rng.permutation(x) for _ in range(999))]
    assert (1 + sum(d >= obs for d in perm)) / 1000 > 0.01


def test_three_point_bad_method(small_window):
    with pytest.raises(ConfigurationError):
        dms_three_point_sample(SQRT2, 1.0, 0.3, small_window, 1, 0, default_probes(), method="zipper")


def test_three_point_bessel_method_weights():
    window = CylinderGrid.centered(16.0, 32)
    e = dms_three_point_sample(1.7, 1.0, 0.3, window, 10, 2, default_probes(), method="bessel")
    assert np.all(e.weights > 0)
    assert e.manifest["acceptance_rate"] == 1.0


# --- hitting time ---------------------------------------------------------

def test_inverse_gaussian_moments():
    law = inverse_gaussian(2.0, 3.0)
    assert law.mean() == pytest.approx(1.5)
    assert law.var() == pytest.approx(3.0 / 8.0)


def test_hitting_time_small_level():
    rep = hitting_time_selftest(1.0, 1e-3, 1000, 0, dt=1e-4)
    assert rep.mean < 0.01


def test_hitting_time_variance_and_law():
    rep = hitting_time_selftest(1.0, 10.0, 5000, 7)
    assert rep.variance == pytest.approx(10.0, rel=0.10)
    assert rep.passed
    assert rep.as_dict()["variance_as_stated"] == 10.0


def test_hitting_time_input_checks():
    with pytest.raises(ParameterError):
        hitting_time_selftest(0.0, 1.0, 1000, 0)
    with pytest.raises(ConfigurationError):
        hitting_time_selftest(1.0, 1.0, 10, 0)
