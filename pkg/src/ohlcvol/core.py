"""Domain types and coordinate transforms for single-bar OHLC data.

A bar is reduced to open-subtracted offsets (H, L, C), scaled by
``sigma * sqrt(T)`` to a normalized triple, and then expressed in
geographic coordinates ``(r, theta, phi)`` where

    h = r cos(theta) cos(phi),  l = r cos(theta) sin(phi),  c = r sin(theta).

The admissible angular region is ``-pi/2 <= phi <= 0`` and
``arctan(sin phi) <= theta <= arctan(cos phi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "OhlcBar",
    "NormalizedTriple",
    "SphericalTriple",
    "check_gamma",
    "normalize_bar",
    "to_spherical",
    "from_spherical",
    "angular_bounds",
    "spherical_arrays",
    "unit_direction",
]

# slack for round-off when validating angles produced by arctan
_ANGLE_SLACK = 1e-12


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


@dataclass(frozen=True)
class OhlcBar:
    """One OHLC bar in log-price units.

    Parameters
    ----------
    open, high, low, close : float
        Log-price levels.
    horizon : float, default 1.0
        Interval length T, strictly positive.
    """

    open: float
    high: float
    low: float
    close: float
    horizon: float = 1.0

    def __post_init__(self):
        vals = (self.open, self.high, self.low, self.close, self.horizon)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("bar fields must be finite")
        if not self.horizon > 0:
            raise DomainError("horizon > 0 violated")
        for lhs, rhs, name in (
            (self.low, self.open, "low <= open"),
            (self.open, self.high, "open <= high"),
            (self.low, self.close, "low <= close"),
            (self.close, self.high, "close <= high"),
        ):
            if lhs > rhs:
                raise DomainError(f"{name} violated")

    def offsets(self):
        """Open-subtracted ``(H, L, C)``."""
        return (self.high - self.open, self.low - self.open, self.close - self.open)

    def scaled(self, factor):
        """Bar with offsets multiplied by ``factor`` > 0 (open kept)."""
        if not factor > 0:
            raise DomainError("scale factor must be positive")
        h, l, c = self.offsets()
        o = self.open
        return OhlcBar(o, o + factor * h, o + factor * l, o + factor * c, self.horizon)


@dataclass(frozen=True)
class NormalizedTriple:
    """High, low and close of the unit-volatility process on the unit interval."""

    h_bar: float
    l_bar: float
    c_bar: float

    def __post_init__(self):
        h, l, c = self.h_bar, self.l_bar, self.c_bar
        if not all(math.isfinite(v) for v in (h, l, c)):
            raise DomainError("triple entries must be finite")
        if h < 0:
            raise DomainError("h_bar >= 0 violated")
        if l > 0:
            raise DomainError("l_bar <= 0 violated")
        if not l <= c <= h:
            raise DomainError("l_bar <= c_bar <= h_bar violated")

    def as_tuple(self):
        return (self.h_bar, self.l_bar, self.c_bar)


@dataclass(frozen=True)
class SphericalTriple:
    """Geographic coordinates of a normalized triple.

    ``degenerate`` marks the origin, where the angles carry no information.
    """

    r: float
    theta: float
    phi: float
    degenerate: bool = False


def check_gamma(gamma):
    """Return ``gamma`` as a float, rejecting non-finite values."""
    g = float(gamma)
    if not math.isfinite(g):
        raise DomainError("drift parameter must be finite")
    return g


def normalize_bar(bar, sigma):
    """Scale a bar to the unit-volatility, unit-interval process.

    Parameters
    ----------
    bar : OhlcBar
    sigma : float
        Volatility per unit time, > 0.

    Returns
    -------
    NormalizedTriple
        ``(H, L, C) / (sigma * sqrt(T))``.
    """
    if not sigma > 0 or not math.isfinite(sigma):
        raise DomainError("sigma > 0 violated")
    scale = sigma * math.sqrt(bar.horizon)
    h, l, c = bar.offsets()
    return NormalizedTriple(h / scale, l / scale, c / scale)


def angular_bounds(phi):
    """Admissible theta interval at longitude ``phi``.

    Returns
    -------
    tuple of float
        ``(arctan(sin phi), arctan(cos phi))``.
    """
    if not -math.pi / 2 - _ANGLE_SLACK <= phi <= _ANGLE_SLACK:
        raise DomainError("-pi/2 <= phi <= 0 violated")
    return math.atan(math.sin(phi)), math.atan(math.cos(phi))


def spherical_arrays(h, l, c):
    """Vectorized ``(r, theta, phi)`` for arrays of normalized triples.

    At the origin all three outputs are 0.
    """
    h = np.asarray(h, dtype=float)
    l = np.asarray(l, dtype=float)
    c = np.asarray(c, dtype=float)
    # angles are scale free; rescaling keeps subnormal inputs at full precision
    m = np.maximum(np.maximum(np.abs(h), np.abs(l)), np.abs(c))
    m = np.where(m > 0.0, m, 1.0)
    h, l, c = h / m, l / m, c / m
    rho = np.hypot(h, l)
    r = m * np.hypot(rho, c)
    theta = np.arctan2(c, rho)
    # arctan2(0, 0) is 0, which is the documented origin convention
    phi = np.arctan2(l, h)
    # l = -0.0 would give phi = -0.0; keep it but never outside [-pi/2, 0]
    phi = np.minimum(phi, 0.0)
    return r, theta, phi


def unit_direction(theta, phi):
    """Unit vector ``(h, l, c)`` for geographic angles (vectorized)."""
    ct = np.cos(theta)
    return ct * np.cos(phi), ct * np.sin(phi), np.sin(theta)


def to_spherical(t):
    """Geographic coordinates of a normalized triple.

    The origin maps to ``r = theta = phi = 0`` with ``degenerate=True``.
    """
    h, l, c = t.as_tuple()
    if h == 0.0 and l == 0.0 and c == 0.0:
        return SphericalTriple(0.0, 0.0, 0.0, degenerate=True)
    r, theta, phi = spherical_arrays(h, l, c)
    return SphericalTriple(float(r), float(theta), float(phi))


def from_spherical(s):
    """Inverse of :func:`to_spherical` for points in the admissible region."""
    if s.r < 0 or not math.isfinite(s.r):
        raise DomainError("r >= 0 violated")
    if s.r == 0.0:
        return NormalizedTriple(0.0, 0.0, 0.0)
    lo, hi = angular_bounds(s.phi)
    if not lo - _ANGLE_SLACK <= s.theta <= hi + _ANGLE_SLACK:
        raise DomainError("s(phi) <= theta <= c(phi) violated")
    h, l, c = unit_direction(s.theta, s.phi)
    h, l, c = s.r * h, s.r * l, s.r * c
    # clip round-off so the triple invariants hold on the domain edges
    h = max(h, 0.0)
    l = min(l, 0.0)
    c = min(max(c, l), h)
    return NormalizedTriple(float(h), float(l), float(c))
