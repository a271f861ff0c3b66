"""Maximum-likelihood drift, volatility and variance from one OHLC bar.

The drift estimate is the close offset per unit time. Given it, the
likelihood of the bar in normalized units depends on the volatility only
through

    N(s) = ln R(h / s, l / s | c / s) - 3 ln s,

where ``(h, l, c)`` are the offsets divided by ``sqrt(T)`` and ``R`` is the
conditional density of high and low given the close. ``N`` is maximized
over ``log s`` by golden-section search. All routines work on arrays of
triples so a whole Monte Carlo sample is solved in one pass.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import DomainError, OhlcBar, check_gamma, unit_direction
from .density import DEFAULT_SERIES, RANGE_FLOOR, cond_high_low_pdf
from .estimators import DiagramTable, EstimateResult
from .kernels import DEFAULT_QUADRATURE, k_moments

__all__ = [
    "MlResult",
    "MlArrays",
    "ml_drift",
    "ml_volatility",
    "ml_variance",
    "ml_volatility_arrays",
    "ml_diagram",
    "ml_mean",
    "normalized_ml",
]

log = logging.getLogger(__name__)

REL_TOL = 1e-8
BRACKET_FACTOR = 10.0
# Bars touching the support boundary (open or close at an extreme) have
# R = 0 for every s. They are solved at this inward offset, relative to the
# range, which approximates the one-sided limit of the estimate.
BOUNDARY_OFFSET = 1e-7
_MAX_EXPANSIONS = 4
_MAX_SHRINKS = 8
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_PROBES = 9


@dataclass(frozen=True)
class MlResult:
    """ML estimates for one bar.

    Attributes
    ----------
    mu_hat : float
        Drift per unit time.
    sigma_hat : float
        Volatility per square root of unit time.
    d_hat : float
        ``sigma_hat ** 2``.
    loglik : float
        Maximized value of the normalized objective.
    iterations : int
        Golden-section steps taken.
    bracket : tuple of float
        Final ``(low, high)`` volatility bracket in the bar's units.
    """

    mu_hat: float
    sigma_hat: float
    d_hat: float
    loglik: float
    iterations: int
    bracket: tuple


@dataclass(frozen=True)
class MlArrays:
    """Elementwise ML volatility in normalized units.

    ``unimodal`` is False where the probe check found a second local
    maximum of the objective inside the bracket.
    """

    s_hat: np.ndarray
    loglik: np.ndarray
    iterations: int
    lower: np.ndarray
    upper: np.ndarray
    unimodal: np.ndarray


def ml_drift(bar):
    """``(close - open) / T``."""
    if not isinstance(bar, OhlcBar):
        raise DomainError("expected an OhlcBar")
    return (bar.close - bar.open) / bar.horizon


def _objective(s, h, l, c, ctl):
    dens = cond_high_low_pdf(h / s, l / s, c / s, ctl)
    pos = dens > 0
    return np.where(pos, np.log(np.where(pos, dens, 1.0)), -np.inf) - 3.0 * np.log(s)


def _inward(h, l, c):
    off = BOUNDARY_OFFSET * (h - l)
    h2 = np.maximum(h, off)
    l2 = np.minimum(l, -off)
    c2 = np.clip(c, l2 + off, h2 - off)
    return h2, l2, c2


def _golden(h, l, c, lo, hi, ctl):
    """Maximize the objective over ``log s`` in ``[lo, hi]`` elementwise."""
    a, b = np.log(lo), np.log(hi)
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1 = _objective(np.exp(x1), h, l, c, ctl)
    f2 = _objective(np.exp(x2), h, l, c, ctl)
    tol = math.log1p(REL_TOL)
    steps = 0
    while np.max(b - a) > tol:
        steps += 1
        left = f1 >= f2
        # left: keep [a, x2], old x1 becomes x2; right: keep [x1, b], old x2 becomes x1
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        keep_x, keep_f = np.where(left, x1, x2), np.where(left, f1, f2)
        new_x = np.where(left, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        new_f = _objective(np.exp(new_x), h, l, c, ctl)
        x1 = np.where(left, new_x, keep_x)
        f1 = np.where(left, new_f, keep_f)
        x2 = np.where(left, keep_x, new_x)
        f2 = np.where(left, keep_f, new_f)
    s = np.exp(0.5 * (a + b))
    return s, _objective(s, h, l, c, ctl), steps


def _unimodal(h, l, c, lo, hi, ctl):
    grid = np.exp(np.linspace(np.log(lo), np.log(hi), _PROBES))
    vals = np.stack([_objective(g, h, l, c, ctl) for g in grid])
    finite = np.where(np.isfinite(vals), vals, -1e300)
    peak = np.argmax(finite, axis=0)
    step = np.diff(finite, axis=0)
    slack = 1e-9 * (1.0 + np.abs(finite[1:]))
    k = np.arange(_PROBES - 1)[:, None]
    ok = np.where(k < peak, step >= -slack, step <= slack)
    return np.all(ok, axis=0)


def ml_volatility_arrays(h, l, c, ctl=DEFAULT_SERIES, check_unimodal=True):
    """ML volatility for arrays of normalized triples.

    The search starts on ``[range / 10, 10 range]`` (the upper end is
    pulled inside the density's range floor). An optimum pinned to the
    lower end triggers a tenfold downward expansion, at most four times.
    Elements whose objective is ``-inf`` at both interior probes get their
    bracket shrunk towards its geometric centre before the search.

    Raises
    ------
    DomainError
        For a zero range, or if the objective stays ``-inf`` after
        shrinking.
    """
    h, l, c = np.broadcast_arrays(
        np.atleast_1d(np.asarray(h, float)),
        np.atleast_1d(np.asarray(l, float)),
        np.atleast_1d(np.asarray(c, float)),
    )
    delta = h - l
    if np.any(~(delta > 0)):
        raise DomainError("ML volatility needs high > low (non-degenerate range)")
    # solve in units of the range so that scaling a bar scales the estimate exactly
    h, l, c = _inward(h / delta, l / delta, c / delta)
    lo = np.full(h.shape, 1.0 / BRACKET_FACTOR)
    hi = np.full(h.shape, min(BRACKET_FACTOR, 0.99 / RANGE_FLOOR))

    for _ in range(_MAX_SHRINKS):
        mid = np.sqrt(lo * hi)
        probe_lo = _objective(np.sqrt(lo * mid), h, l, c, ctl)
        probe_hi = _objective(np.sqrt(hi * mid), h, l, c, ctl)
        dead = ~np.isfinite(probe_lo) & ~np.isfinite(probe_hi)
        if not dead.any():
            break
        lo = np.where(dead, np.sqrt(lo * mid), lo)
        hi = np.where(dead, np.sqrt(hi * mid), hi)
    else:
        raise DomainError("likelihood vanishes across the whole bracket")

    s, val, steps = _golden(h, l, c, lo, hi, ctl)
    total = steps
    for _ in range(_MAX_EXPANSIONS):
        pinned = s < lo * (1.0 + 1e-6)
        if not pinned.any():
            break
        idx = np.nonzero(pinned)[0]
        new_lo = lo[idx] / BRACKET_FACTOR
        s2, v2, st = _golden(h[idx], l[idx], c[idx], new_lo, lo[idx] * 1.01, ctl)
        lo[idx] = new_lo
        s[idx], val[idx] = s2, v2
        total += st

    if check_unimodal:
        uni = _unimodal(h, l, c, lo, hi, ctl)
        bad = int(np.count_nonzero(~uni))
        if bad:
            log.warning("ML objective not unimodal on the bracket for %d of %d bars", bad, uni.size)
    else:
        uni = np.ones(s.shape, dtype=bool)
    return MlArrays(s * delta, val - 3.0 * np.log(delta), total, lo * delta, hi * delta, uni)


def ml_volatility(bar, ctl=DEFAULT_SERIES):
    """ML volatility of one bar.

    Returns
    -------
    MlResult
    """
    if not isinstance(bar, OhlcBar):
        raise DomainError("expected an OhlcBar")
    root = math.sqrt(bar.horizon)
    h, l, c = (x / root for x in bar.offsets())
    res = ml_volatility_arrays(h, l, c, ctl)
    s = float(res.s_hat[0])
    return MlResult(
        ml_drift(bar),
        s,
        s * s,
        float(res.loglik[0]),
        res.iterations,
        (float(res.lower[0]), float(res.upper[0])),
    )


def ml_variance(bar, ctl=DEFAULT_SERIES):
    """ML variance, the square of :func:`ml_volatility`'s estimate."""
    return ml_volatility(bar, ctl).d_hat


def _ml_exact(theta, phi):
    theta = np.asarray(theta, float)
    phi = np.asarray(phi, float)
    shape = np.broadcast(theta, phi).shape
    h, l, c = unit_direction(np.broadcast_to(theta, shape).ravel(), np.broadcast_to(phi, shape).ravel())
    return ml_volatility_arrays(h, l, c, check_unimodal=False).s_hat.reshape(shape)


def _ml_exact_squared(theta, phi):
    s = _ml_exact(theta, phi)
    return s * s


@lru_cache(maxsize=2)
def ml_diagram(quantity="volatility"):
    """The ML estimator as a diagram: its value on the unit sphere.

    ``quantity="variance"`` gives the diagram of the ML variance estimator.
    """
    if quantity == "volatility":
        return DiagramTable.from_function("volatility", "ML", None, _ml_exact)
    if quantity == "variance":
        return DiagramTable.from_function("variance", "ML", None, _ml_exact_squared)
    raise DomainError("quantity must be 'variance' or 'volatility'")


@lru_cache(maxsize=32)
def ml_mean(gamma0, cfg=DEFAULT_QUADRATURE):
    """``E[s_ML | gamma0]`` by angular quadrature of the ML diagram."""
    return float(k_moments(ml_diagram(), 1, check_gamma(gamma0), cfg))


def normalized_ml(bar, gamma0=0.0, ctl=DEFAULT_SERIES, cfg=DEFAULT_QUADRATURE):
    """ML volatility divided by its expectation at ``gamma0``.

    ``point`` is the normalized volatility; ``canonical`` equals it;
    ``diagram_value`` is the normalizing mean.
    """
    mean = ml_mean(check_gamma(gamma0), cfg)
    s = ml_volatility(bar, ctl).sigma_hat / mean
    return EstimateResult(s, s, mean)
