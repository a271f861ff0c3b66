import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ohlcvol.core import (
    DomainError,
    NormalizedTriple,
    OhlcBar,
    SphericalTriple,
    angular_bounds,
    check_gamma,
    from_spherical,
    normalize_bar,
    spherical_arrays,
    to_spherical,
)


@st.composite
def triples(draw):
    h = draw(st.floats(0.0, 5.0))
    l = -draw(st.floats(0.0, 5.0))
    c = draw(st.floats(0.0, 1.0)) * (h - l) + l
    c = min(max(c, l), h)
    return NormalizedTriple(h, l, c)


@pytest.mark.parametrize(
    "bar, sigma",
    [
        (OhlcBar(0, 1, -1, 0.5), 1.0),
        (OhlcBar(0, 2, -2, 1, horizon=4), 1.0),
        (OhlcBar(5, 6, 4, 5.5), 1.0),
        (OhlcBar(0, 2, -2, 1), 2.0),
    ],
)
def test_normalize_bar(bar, sigma):
    t = normalize_bar(bar, sigma)
    assert t.as_tuple() == pytest.approx((1.0, -1.0, 0.5), abs=1e-15)


@pytest.mark.parametrize("sigma", [0.0, -1.0, math.inf, math.nan])
def test_normalize_bar_rejects_sigma(sigma):
    with pytest.raises(DomainError):
        normalize_bar(OhlcBar(0, 1, -1, 0), sigma)


@pytest.mark.parametrize(
    "fields, message",
    [
        ((0, 1, 2, 0), "low <= open"),
        ((0, -1, -2, -1), "open <= high"),
        ((0, 1, -1, -2), "low <= close"),
        ((0, 1, -1, 2), "close <= high"),
    ],
)
def test_bar_names_violated_inequality(fields, message):
    with pytest.raises(DomainError, match=message):
        OhlcBar(*fields)


def test_bar_horizon_and_finiteness():
    with pytest.raises(DomainError, match="horizon"):
        OhlcBar(0, 1, -1, 0, horizon=0)
    with pytest.raises(DomainError):
        OhlcBar(0, math.nan, -1, 0)


def test_bar_scaled_keeps_open():
    b = OhlcBar(3, 4, 2.5, 3.5, 2.0).scaled(2.0)
    assert b.offsets() == (2.0, -1.0, 1.0)
    assert b.open == 3 and b.horizon == 2.0


def test_triple_invariants():
    with pytest.raises(DomainError, match="h_bar"):
        NormalizedTriple(-0.1, -1, -0.5)
    with pytest.raises(DomainError, match="l_bar <= 0"):
        NormalizedTriple(1, 0.1, 0.5)
    with pytest.raises(DomainError, match="c_bar"):
        NormalizedTriple(1, -1, 2)


def test_to_spherical_examples():
    s = to_spherical(NormalizedTriple(1, -1, 0))
    assert (s.r, s.theta, s.phi) == pytest.approx((math.sqrt(2), 0.0, -math.pi / 4), abs=1e-15)
    s = to_spherical(NormalizedTriple(1, 0, 1))
    assert (s.r, s.theta, s.phi) == pytest.approx((math.sqrt(2), math.pi / 4, 0.0), abs=1e-15)
    s = to_spherical(NormalizedTriple(0, 0, 0))
    assert s.degenerate and s.r == 0.0


def test_from_spherical_examples():
    assert from_spherical(SphericalTriple(1, 0, 0)).as_tuple() == pytest.approx((1, 0, 0), abs=1e-15)
    t = from_spherical(SphericalTriple(math.sqrt(2), 0, -math.pi / 4))
    assert t.as_tuple() == pytest.approx((1, -1, 0), abs=1e-15)
    assert from_spherical(SphericalTriple(0, 0.3, -0.2)).as_tuple() == (0, 0, 0)


def test_from_spherical_rejects_outside_domain():
    with pytest.raises(DomainError):
        from_spherical(SphericalTriple(1, 1.0, -0.2))
    with pytest.raises(DomainError):
        from_spherical(SphericalTriple(1, 0, 0.5))


def test_angular_bounds():
    assert angular_bounds(0.0) == pytest.approx((0.0, math.pi / 4))
    assert angular_bounds(-math.pi / 2) == pytest.approx((-math.pi / 4, 0.0), abs=1e-15)
    lo, hi = angular_bounds(-math.pi / 4)
    assert lo == pytest.approx(math.atan(-math.sqrt(2) / 2))
    assert hi == pytest.approx(math.atan(math.sqrt(2) / 2))
    with pytest.raises(DomainError):
        angular_bounds(0.1)


def test_check_gamma():
    assert check_gamma(-2) == -2.0
    with pytest.raises(DomainError):
        check_gamma(math.inf)


@given(triples())
def test_round_trip(t):
    s = to_spherical(t)
    back = from_spherical(s)
    r = math.hypot(*t.as_tuple())
    assert np.allclose(back.as_tuple(), t.as_tuple(), rtol=1e-12, atol=1e-12 * max(r, 1e-300))


@given(triples())
def test_domain_closure(t):
    s = to_spherical(t)
    assert -math.pi / 2 <= s.phi <= 0
    lo, hi = angular_bounds(s.phi)
    assert lo - 1e-15 <= s.theta <= hi + 1e-15


@given(triples(), st.floats(0.01, 100.0))
def test_scaling_homogeneity(t, lam):
    s = to_spherical(t)
    r, theta, phi = spherical_arrays(*(lam * v for v in t.as_tuple()))
    if s.degenerate:
        assert r == 0.0
        return
    assert float(theta) == pytest.approx(s.theta, abs=1e-13)
    assert float(phi) == pytest.approx(s.phi, abs=1e-13)
    assert float(r) == pytest.approx(lam * s.r, rel=1e-13)
