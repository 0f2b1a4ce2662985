import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from scipy.optimize import curve_fit

from pvcast import geo
from pvcast.errors import InsufficientData, SingularSystem, ValidationError
from pvcast.interpolation import (KrigingModel, VariogramModel, empirical_semivariogram,
                                  fit_kriging, fit_variogram, krige_grid)


def field(rng, n=20):
    lat = rng.uniform(-15.0, -14.0, n)
    lon = rng.uniform(-45.0, -44.0, n)
    vals = np.sin(3 * lat) + np.cos(2 * lon) + 0.1 * rng.normal(size=n)
    return lat, lon, vals


def kriging_oracle(lat, lon, vals, variogram, glat, glon, metric="planar"):
    """Ordinary kriging from the textbook system, solved with numpy."""
    d = geo.distance_fn(metric)
    n = len(vals)
    A = np.ones((n + 1, n + 1))
    A[n, n] = 0.0
    A[:n, :n] = variogram(d(lat, lon, lat, lon))
    out = []
    for g in range(len(glat)):
        b = np.ones(n + 1)
        b[:n] = variogram(d(lat, lon, glat[g:g + 1], glon[g:g + 1])[:, 0])
        w = np.linalg.solve(A, b)
        out.append(w[:n] @ vals)
    return np.array(out)


# -- empirical semivariogram ------------------------------------------------------

def test_two_samples_single_point():
    pts = empirical_semivariogram([0.0, 0.0], [0.0, 1.0], [1.0, 3.0], metric="planar")
    assert pts == [(1.0, 2.0)]


def test_constant_field_semivariance_zero(rng):
    lat, lon, _ = field(rng)
    pts = empirical_semivariogram(lat, lon, np.full(20, 4.2), n_bins=5)
    assert pts and all(g == 0.0 for _, g in pts)


def test_one_sample():
    with pytest.raises(InsufficientData):
        empirical_semivariogram([0.0], [0.0], [1.0])


def test_bins_average_pairs(rng):
    lat, lon, vals = field(rng, 12)
    pts = empirical_semivariogram(lat, lon, vals, n_bins=4, metric="planar")
    d = geo.planar(lat, lon, lat, lon)
    iu = np.triu_indices(12, 1)
    h, g = d[iu], 0.5 * (vals[iu[0]] - vals[iu[1]]) ** 2
    edges = np.linspace(0, h.max(), 5)
    want = []
    for b in range(4):
        lo, hi = edges[b], edges[b + 1]
        m = (h > lo) & (h <= hi)
        if m.any():
            want.append((h[m].mean(), g[m].mean()))
    np.testing.assert_allclose(pts, want, rtol=1e-12)


# -- variogram fit ------------------------------------------------------------------

def test_exact_power_law_recovered_against_curve_fit():
    h = np.linspace(0.05, 1.0, 20)
    g = 2.0 * h ** 1.5
    model = fit_variogram(list(zip(h, g)))
    popt, _ = curve_fit(lambda x, c, s, a: c + s * x ** a, h, g, p0=[0.1, 1.0, 1.0],
                        bounds=([0, 0, 0], [np.inf, np.inf, 2]), xtol=1e-15, ftol=1e-15)
    assert (model.nugget, model.scale, model.exponent) == pytest.approx((0.0, 2.0, 1.5), abs=1e-6)
    assert model.scale == pytest.approx(popt[1], rel=1e-4)
    assert model.exponent == pytest.approx(popt[2], rel=1e-4)


def test_nugget_recovered():
    h = np.linspace(0.1, 3.0, 15)
    model = fit_variogram(list(zip(h, 0.3 + 0.5 * h ** 0.7)))
    assert (model.nugget, model.scale, model.exponent) == pytest.approx((0.3, 0.5, 0.7), abs=1e-6)


def test_all_zero_semivariances():
    model = fit_variogram([(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)])
    assert model.scale == 0.0 and model.nugget == 0.0


def test_two_points_insufficient():
    with pytest.raises(InsufficientData):
        fit_variogram([(1.0, 1.0), (2.0, 2.0)])


@given(st.floats(0.1, 10.0), st.floats(0.2, 1.9))
@example(1.0, 1.71484375)
@settings(max_examples=30, deadline=None)
def test_fit_is_exact_on_noiseless_power_laws(scale, exponent):
    h = np.linspace(0.1, 5.0, 12)
    model = fit_variogram(list(zip(h, scale * h ** exponent)))
    np.testing.assert_allclose(model(h), scale * h ** exponent, rtol=1e-6)


def test_variogram_at_zero_lag_is_zero():
    v = VariogramModel(scale=1.0, exponent=1.0, nugget=0.5)
    assert v(0.0) == 0.0 and v(1.0) == 1.5


def test_exponent_bounds():
    with pytest.raises(ValidationError):
        VariogramModel(scale=1.0, exponent=2.0)


# -- kriging -----------------------------------------------------------------------

def test_predictions_match_numpy_oracle(rng):
    lat, lon, vals = field(rng)
    v = VariogramModel(scale=1.3, exponent=1.2, nugget=0.05)
    model = KrigingModel(lat, lon, vals, v, metric="planar")
    glat = rng.uniform(-15, -14, 7)
    glon = rng.uniform(-45, -44, 7)
    r = krige_grid(model, (glat, glon))
    np.testing.assert_allclose(r.prediction, kriging_oracle(lat, lon, vals, v, glat, glon),
                               rtol=1e-9, atol=1e-12)


def test_exactness_and_weight_sum(rng):
    lat, lon, vals = field(rng)
    model = fit_kriging(lat, lon, vals, metric="planar")
    r = krige_grid(model, (lat, lon))
    np.testing.assert_allclose(r.prediction, vals, atol=1e-8)
    w = model.weights(rng.uniform(-15, -14, 30), rng.uniform(-45, -44, 30))
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-10)


def test_constant_samples_give_constant_prediction(rng):
    lat, lon, _ = field(rng, 10)
    model = KrigingModel(lat, lon, np.full(10, 3.5), VariogramModel(1.0, 1.0), "planar")
    r = krige_grid(model, (rng.uniform(-15, -14, 5), rng.uniform(-45, -44, 5)))
    np.testing.assert_allclose(r.prediction, 3.5, atol=1e-12)


def test_symmetric_midpoint():
    lat = np.array([0.0, 0.0, 5.0])
    lon = np.array([-1.0, 1.0, 0.0])
    # third sample is equidistant from both ends, so it cannot break the symmetry
    model = KrigingModel(lat, lon, np.array([1.0, 3.0, 2.0]), VariogramModel(1.0, 1.0), "planar")
    r = krige_grid(model, (np.array([0.0]), np.array([0.0])))
    assert r.prediction[0] == pytest.approx(2.0, abs=1e-12)


def test_translation_invariance(rng):
    lat, lon, vals = field(rng)
    v = VariogramModel(2.0, 1.5)
    glat, glon = rng.uniform(-15, -14, 10), rng.uniform(-45, -44, 10)
    a = krige_grid(KrigingModel(lat, lon, vals, v, "planar"), (glat, glon))
    b = krige_grid(KrigingModel(lat, lon + 3.0, vals, v, "planar"), (glat, glon + 3.0))
    np.testing.assert_allclose(a.prediction, b.prediction, atol=1e-9)


def test_variance_non_negative(rng):
    lat, lon, vals = field(rng)
    model = fit_kriging(lat, lon, vals)
    r = krige_grid(model, geo.regular_grid(-15, -14, -45, -44, 0.1))
    assert r.variance.min() >= -1e-10


def test_duplicate_locations_are_merged(rng):
    lat, lon, vals = field(rng, 6)
    lat2, lon2 = np.append(lat, lat[0]), np.append(lon, lon[0])
    vals2 = np.append(vals, vals[0] + 2.0)
    model = KrigingModel(lat2, lon2, vals2, VariogramModel(1.0, 1.0), "planar")
    assert model.merged == 1 and model.n == 6
    r = krige_grid(model, (lat[:1], lon[:1]))
    assert r.prediction[0] == pytest.approx(vals[0] + 1.0, abs=1e-8)


def test_degenerate_variogram_is_singular(rng):
    lat, lon, vals = field(rng, 5)
    model = KrigingModel(lat, lon, vals, VariogramModel(0.0, 1.0), "planar")
    with pytest.raises(SingularSystem):
        krige_grid(model, (lat, lon))


def test_fewer_than_three_samples():
    with pytest.raises(InsufficientData):
        fit_kriging([0.0, 1.0], [0.0, 1.0], [1.0, 2.0])


def test_threaded_grid_is_identical(rng):
    lat, lon, vals = field(rng)
    model = fit_kriging(lat, lon, vals)
    grid = geo.regular_grid(-15, -14, -45, -44, 0.05)
    a = krige_grid(model, grid, chunk=64)
    b = krige_grid(model, grid, chunk=64, threads=4)
    np.testing.assert_array_equal(a.prediction, b.prediction)
    np.testing.assert_array_equal(a.variance, b.variance)
    with pytest.raises(ValidationError):
        krige_grid(model, grid, threads=0)
