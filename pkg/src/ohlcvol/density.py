"""Exact densities of the drifted Wiener process with absorbing boundaries.

Everything here is expressed for the normalized process
``v(t) = gamma * t + W(t)`` on ``0 <= t <= 1`` unless a time ``tau`` is
passed explicitly. All functions broadcast over numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, NormalizedTriple, check_gamma

__all__ = [
    "ConvergenceError",
    "SeriesControl",
    "SeriesInfo",
    "RANGE_FLOOR",
    "gaussian_kernel",
    "close_pdf",
    "cond_high_pdf",
    "d_kernel",
    "cond_high_low_pdf",
    "cond_high_low_series",
    "joint_pdf",
    "joint_pdf_arrays",
    "single_boundary_density",
    "two_boundary_density",
    "static_two_boundary_density",
    "dimensional_joint_pdf",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Below this normalized range the conditional density is smaller than
# exp(-pi^2 / (2 * 0.1^2)) ~ 1e-214 and is returned as exactly zero.
RANGE_FLOOR = 0.1
# The image sum cancels O(1) terms when the range is small; a result below
# this multiple of eps times the largest term is roundoff and returned as 0.
NOISE_FACTOR = 64.0


class ConvergenceError(ArithmeticError):
    """An infinite series or an adaptive rule failed to converge.

    Attributes
    ----------
    last_term : float
        Magnitude of the last term (or error estimate) seen.
    """

    def __init__(self, message, last_term=float("nan")):
        super().__init__(message)
        self.last_term = float(last_term)


@dataclass(frozen=True)
class SeriesControl:
    """Truncation settings for the image series.

    Parameters
    ----------
    max_terms : int
        Largest ``|m|`` summed.
    tail_tol : float
        A pair of terms ``m, -m`` counts as negligible when it is below
        ``tail_tol`` times the running sum; two negligible pairs in a row
        stop the series.
    """

    max_terms: int = 64
    tail_tol: float = 1e-12

    def __post_init__(self):
        if int(self.max_terms) != self.max_terms or self.max_terms < 1:
            raise DomainError("max_terms >= 1 violated")
        if not 0 < self.tail_tol < 1:
            raise DomainError("0 < tail_tol < 1 violated")


DEFAULT_SERIES = SeriesControl()


@dataclass(frozen=True)
class SeriesInfo:
    """Diagnostics of one vectorized series evaluation."""

    terms_used: int
    underflow: np.ndarray
    last_term: float


def gaussian_kernel(x, tau):
    """Heat kernel ``exp(-x^2 / (2 tau)) / sqrt(2 pi tau)``."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("tau > 0 violated")
    x = np.asarray(x, dtype=float)
    out = np.exp(-x * x / (2.0 * tau)) / np.sqrt(2.0 * np.pi * tau)
    return out[()] if out.ndim == 0 else out


def close_pdf(c, gamma):
    """Density of the close, a unit normal centred at ``gamma``."""
    c = np.asarray(c, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * (c - gamma) ** 2)
    return out[()] if out.ndim == 0 else out


def cond_high_pdf(h, c):
    """Density of the high given the close, ``2 (2h - c) exp(2h (c - h))``.

    Zero for ``h < max(0, c)``.
    """
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    inside = h >= np.maximum(0.0, c)
    val = 2.0 * (2.0 * h - c) * np.exp(2.0 * h * (c - h))
    out = np.where(inside, val, 0.0)
    return out[()] if out.ndim == 0 else out


def d_kernel(h, c):
    """``((c - 2h)^2 - 1) exp(2h (c - h))``; may be negative."""
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    out = ((c - 2.0 * h) ** 2 - 1.0) * np.exp(2.0 * h * (c - h))
    return out[()] if out.ndim == 0 else out


def _d(x, c):
    return ((c - 2.0 * x) ** 2 - 1.0) * np.exp(2.0 * x * (c - x))


def cond_high_low_series(h, l, c, ctl=DEFAULT_SERIES):
    """Joint density of high and low given the close, with diagnostics.

    Returns
    -------
    values : ndarray
        The density, zero outside ``h > 0, l < 0, l < c < h``.
    info : SeriesInfo
        Terms used and a mask of points returned as zero because the range
        fell below :data:`RANGE_FLOOR`.

    Raises
    ------
    ConvergenceError
        If some point needs more than ``ctl.max_terms`` pairs.
    """
    h, l, c = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(l, dtype=float), np.asarray(c, dtype=float)
    )
    out = np.zeros(h.shape)
    support = (h > 0) & (l < 0) & (l < c) & (c < h)
    delta = h - l
    underflow = np.array(support & (delta < RANGE_FLOOR))
    active = support & ~underflow
    if not active.any():
        return out, SeriesInfo(0, underflow, 0.0)

    hs, ls, cs, ds = h[active], l[active], c[active], delta[active]
    total = np.zeros(hs.shape)
    biggest = np.zeros(hs.shape)
    scale = np.zeros(hs.shape)
    quiet = np.zeros(hs.shape, dtype=np.int8)
    live = np.ones(hs.shape, dtype=bool)
    eps = np.finfo(float).eps
    used = 0
    last = 0.0
    for m in range(1, ctl.max_terms + 1):
        idx = np.nonzero(live)[0]
        d, lo, cc = ds[idx], ls[idx], cs[idx]
        # m and -m together; the (1 - m) factor kills the m = 1 shifted term
        parts = (
            m * m * _d(m * d, cc),
            m * (1 - m) * _d(m * d + lo, cc),
            m * m * _d(-m * d, cc),
            -m * (1 + m) * _d(-m * d + lo, cc),
        )
        pair = parts[0] + parts[1] + parts[2] + parts[3]
        scale[idx] = np.maximum(scale[idx], sum(np.abs(q) for q in parts))
        total[idx] += pair
        mag = np.abs(pair)
        biggest[idx] = np.maximum(biggest[idx], mag)
        small = mag <= ctl.tail_tol * np.maximum(np.abs(total[idx]), eps * biggest[idx])
        quiet[idx] = np.where(small, quiet[idx] + 1, 0)
        live[idx] = quiet[idx] < 2
        used = m
        last = float(mag.max()) if mag.size else 0.0
        if not live.any():
            break
    else:
        if live.any():
            raise ConvergenceError(
                f"image series did not converge within {ctl.max_terms} terms", last
            )
    noise = np.abs(total) <= NOISE_FACTOR * eps * scale
    total[noise] = 0.0
    underflow[active] = noise
    out[active] = 4.0 * total
    return out, SeriesInfo(used, underflow, last)


def cond_high_low_pdf(h, l, c, ctl=DEFAULT_SERIES):
    """Joint density of the high and low given the close.

    ``4 * sum_{m != 0} m [m D(m(h-l), c) + (1-m) D(m(h-l)+l, c)]`` with
    ``D`` from :func:`d_kernel`.
    """
    out, _ = cond_high_low_series(h, l, c, ctl)
    return out[()] if out.ndim == 0 else out


def joint_pdf_arrays(h, l, c, gamma, ctl=DEFAULT_SERIES):
    """Joint density of ``(h, l, c)`` for drift ``gamma`` (array form)."""
    r, _ = cond_high_low_series(h, l, c, ctl)
    out = close_pdf(c, gamma) * r
    return out[()] if np.ndim(out) == 0 else out


def joint_pdf(t, gamma, ctl=DEFAULT_SERIES):
    """Joint density of a :class:`NormalizedTriple` for drift ``gamma``."""
    if not isinstance(t, NormalizedTriple):
        t = NormalizedTriple(*t)
    gamma = check_gamma(gamma)
    return float(joint_pdf_arrays(t.h_bar, t.l_bar, t.c_bar, gamma, ctl))


def single_boundary_density(c, h, tau, gamma):
    """Density of the close with one absorbing upper level ``h``.

    ``g(c - gamma tau, tau) - exp(2 h gamma) g(c - 2h - gamma tau, tau)``
    for ``c < h``, zero at and above the level.
    """
    c = np.asarray(c, dtype=float)
    h = np.asarray(h, dtype=float)
    tau = float(tau)
    if tau <= 0:
        raise DomainError("tau > 0 violated")
    if np.any(h <= 0):
        raise DomainError("h > 0 violated")
    norm = 1.0 / math.sqrt(2.0 * math.pi * tau)
    direct = -((c - gamma * tau) ** 2) / (2.0 * tau)
    image = 2.0 * h * gamma - (c - 2.0 * h - gamma * tau) ** 2 / (2.0 * tau)
    val = norm * (np.exp(direct) - np.exp(image))
    out = np.where(c < h, val, 0.0)
    return out[()] if out.ndim == 0 else out


def _pairwise_series(term, ctl):
    """Sum ``term(m)`` over all integers, adding ``m`` and ``-m`` together.

    Stops after two consecutive pairs below ``tail_tol`` times the running
    sum, where the running sum is floored at the round-off level of the
    largest term so that sums cancelling to zero still terminate.
    """
    total = term(0)
    biggest = np.abs(total)
    eps = np.finfo(float).eps
    quiet = 0
    for m in range(1, ctl.max_terms + 1):
        pair = term(m) + term(-m)
        total = total + pair
        biggest = np.maximum(biggest, np.abs(pair))
        scale = np.maximum(np.abs(total), eps * biggest)
        if np.all(np.abs(pair) <= ctl.tail_tol * scale):
            quiet += 1
            if quiet >= 2:
                return total
        else:
            quiet = 0
    raise ConvergenceError(
        f"image series did not converge within {ctl.max_terms} terms",
        float(np.max(np.abs(pair))),
    )


def _image_sum(c, h, l, tau, gamma, u, v, ctl):
    c = np.asarray(c, dtype=float)
    delta = h - l
    norm = 1.0 / math.sqrt(2.0 * math.pi * tau)
    shift = c - gamma * tau

    def term(m):
        # common factor exp(2 (v - u) m (m delta + l)) carried in the exponents
        drift = 2.0 * (v - u) * m * (m * delta + l)
        a = drift + 2.0 * (v - gamma) * delta * m - (shift + 2.0 * delta * m) ** 2 / (2.0 * tau)
        b = (
            drift
            + 2.0 * (gamma - v) * (delta * m + l)
            - (shift - 2.0 * l - 2.0 * delta * m) ** 2 / (2.0 * tau)
        )
        return np.exp(a) - np.exp(b)

    total = _pairwise_series(term, ctl)
    return norm * total


def two_boundary_density(c, h, l, tau, gamma, u, v, ctl=DEFAULT_SERIES):
    """Density of the close with absorbing lines ``h + u t`` and ``l + v t``.

    Image sum over ``m`` of

    ``exp(2 (v-u) m (m (h-l) + l)) * [exp(2 (v-gamma)(h-l) m) g(c - gamma tau + 2 (h-l) m, tau)
    - exp(2 (gamma-v)((h-l) m + l)) g(c - gamma tau - 2l - 2 (h-l) m, tau)]``.

    Terms cancel pairwise on both lines. Points outside the closed strip
    return 0.
    """
    if tau <= 0:
        raise DomainError("tau > 0 violated")
    if not (h > 0 and l < 0):
        raise DomainError("h > 0 and l < 0 violated")
    c = np.asarray(c, dtype=float)
    val = _image_sum(c, h, l, tau, gamma, u, v, ctl)
    # the lines themselves are kept so the absorbing zeros are observable
    inside = (c >= l + v * tau) & (c <= h + u * tau)
    out = np.where(inside, val, 0.0)
    return out[()] if out.ndim == 0 else out


def static_two_boundary_density(c, h, l, tau, gamma, ctl=DEFAULT_SERIES):
    """Two fixed absorbing levels ``l < 0 < h``; the ``u = v = 0`` case.

    Summed from its own image formula rather than by delegation.
    """
    if tau <= 0:
        raise DomainError("tau > 0 violated")
    c = np.asarray(c, dtype=float)
    delta = h - l
    norm = 1.0 / math.sqrt(2.0 * math.pi * tau)
    shift = c - gamma * tau

    def term(m):
        a = -2.0 * gamma * delta * m - (shift + 2.0 * delta * m) ** 2 / (2.0 * tau)
        b = 2.0 * gamma * (delta * m + l) - (shift - 2.0 * l - 2.0 * delta * m) ** 2 / (2.0 * tau)
        return np.exp(a) - np.exp(b)

    total = _pairwise_series(term, ctl)
    out = np.where((c > l) & (c < h), norm * total, 0.0)
    return out[()] if out.ndim == 0 else out


def dimensional_joint_pdf(eta, lam, xi, mu, sigma, T, ctl=DEFAULT_SERIES):
    """Joint density of open-subtracted high, low and close in price units.

    Parameters
    ----------
    eta, lam, xi : float or array
        High, low and close offsets.
    mu : float
        Drift per unit time.
    sigma : float
        Volatility per unit time.
    T : float
        Interval length.
    """
    if not sigma > 0:
        raise DomainError("sigma > 0 violated")
    if not T > 0:
        raise DomainError("T > 0 violated")
    scale = sigma * math.sqrt(T)
    gamma = mu * math.sqrt(T) / sigma
    q = joint_pdf_arrays(
        np.asarray(eta, dtype=float) / scale,
        np.asarray(lam, dtype=float) / scale,
        np.asarray(xi, dtype=float) / scale,
        gamma,
        ctl,
    )
    return q / scale**3
