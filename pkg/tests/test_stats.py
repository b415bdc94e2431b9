import math
import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmdcsim.stats import (
    EARTH_RADIUS_MILES,
    Location,
    UndefinedCoVError,
    cov,
    distance_matrix,
    distance_miles,
    geometric_center,
    stable_power,
)

positive_series = st.lists(st.floats(0.0, 1e6), min_size=1, max_size=50).filter(lambda xs: sum(xs) > 1e-3)
locations = st.builds(Location, st.floats(-90, 90), st.floats(-180, 180))


def test_cov_constant_is_zero():
    assert cov([5, 5, 5, 5]) == 0.0


def test_cov_hand_value():
    assert cov([2, 4]) == pytest.approx(1 / 3, rel=1e-15)


@pytest.mark.parametrize("series", [[0, 0, 0], [], [-1, 1]])
def test_cov_undefined(series):
    with pytest.raises(UndefinedCoVError):
        cov(series)


@given(positive_series)
def test_cov_matches_statistics_module(xs):
    expect = statistics.pstdev(xs) / statistics.fmean(xs)
    assert cov(xs) == pytest.approx(expect, rel=1e-9, abs=1e-12)


@given(positive_series, st.floats(1e-3, 1e3))
def test_cov_scale_invariant(xs, k):
    assert cov([k * x for x in xs]) == pytest.approx(cov(xs), rel=1e-12, abs=1e-12)


def test_cov_of_antiphase_sum_is_zero():
    a = np.array([1.0, 0.0] * 10)
    assert cov(a + (1.0 - a)) == 0.0


def test_stable_power_windows():
    assert stable_power([10, 20, 5, 30], 4) == 5
    assert stable_power([10, 20, 5, 30], 2) == 5
    assert stable_power([10, 20, 5, 30], 1) == 30
    assert all(stable_power([7] * 6, w) == 7 for w in range(1, 7))
    with pytest.raises(ValueError):
        stable_power([1, 2], 3)


def test_distance_identity_and_quarter_circle():
    a = Location(12.5, -40.0)
    assert distance_miles(a, a) == 0.0
    q = distance_miles(Location(0, 0), Location(0, 90))
    assert q == pytest.approx(2 * math.pi * EARTH_RADIUS_MILES / 4, rel=1e-12)
    assert q == pytest.approx(6218.5, abs=0.05)


def _cosine_law(a, b):
    # independent spherical law of cosines
    p1, p2 = math.radians(a.latitude), math.radians(b.latitude)
    dl = math.radians(b.longitude - a.longitude)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return EARTH_RADIUS_MILES * math.acos(max(-1.0, min(1.0, c)))


@given(locations, locations)
def test_distance_symmetric_and_matches_cosine_law(a, b):
    d = distance_miles(a, b)
    assert d == distance_miles(b, a)
    assert d >= 0
    if d > 1.0:
        assert d == pytest.approx(_cosine_law(a, b), rel=1e-6)


@given(locations, locations, locations)
def test_triangle_inequality(a, b, c):
    assert distance_miles(a, c) <= distance_miles(a, b) + distance_miles(b, c) + 1e-6


def test_distance_matrix_and_center():
    locs = [Location(0, 0), Location(0, 10), Location(10, 0)]
    m = distance_matrix(locs)
    assert m.shape == (3, 3)
    assert np.allclose(m, m.T) and np.all(np.diag(m) == 0)
    assert m[0, 1] == distance_miles(locs[0], locs[1])
    c = geometric_center(locs)
    assert (c.latitude, c.longitude) == pytest.approx((10 / 3, 10 / 3))


@pytest.mark.parametrize("lat,lon", [(91, 0), (0, 181), (-90.5, 0)])
def test_location_range(lat, lon):
    with pytest.raises(ValueError):
        Location(lat, lon)
