import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvcast import geo
from pvcast.errors import ValidationError

R = 6371.0088


def haversine_oracle(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dlon = math.radians(lon2 - lon1)
    # spherical law of cosines, an independent formula
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dlon)
    return R * math.acos(max(-1.0, min(1.0, c)))


def test_one_degree_of_longitude_on_equator():
    d = geo.haversine([0.0], [0.0], [0.0], [1.0])
    assert d.shape == (1, 1)
    assert d[0, 0] == pytest.approx(2 * math.pi * R / 360, rel=1e-12)


@given(st.floats(-80, 80), st.floats(-179, 179), st.floats(-80, 80), st.floats(-179, 179))
@settings(max_examples=60, deadline=None)
def test_haversine_matches_law_of_cosines(a, b, c, d):
    got = geo.haversine([a], [b], [c], [d])[0, 0]
    want = haversine_oracle(a, b, c, d)
    assert got == pytest.approx(want, abs=1e-3)


def test_pairwise_matrix_shape_and_symmetry(rng):
    lat = rng.uniform(-20, 0, 5)
    lon = rng.uniform(-50, -40, 5)
    d = geo.haversine(lat, lon, lat, lon)
    assert d.shape == (5, 5)
    np.testing.assert_allclose(d, d.T, atol=1e-9)
    np.testing.assert_allclose(np.diag(d), 0.0, atol=1e-9)


def test_location_validation():
    geo.Location(-10.0, -45.0)
    with pytest.raises(ValidationError):
        geo.Location(91.0, 0.0)
    with pytest.raises(ValidationError):
        geo.Location(0.0, 181.0)


def test_regular_grid_is_row_major_from_north_west():
    lat, lon = geo.regular_grid(-2.0, 0.0, 10.0, 11.0, 1.0)
    assert list(lat) == [0.0, 0.0, -1.0, -1.0, -2.0, -2.0]
    assert list(lon) == [10.0, 11.0, 10.0, 11.0, 10.0, 11.0]
    assert geo.grid_shape(lat, lon) == (3, 2)


def test_unknown_metric():
    with pytest.raises(ValidationError):
        geo.distance_fn("manhattan")
