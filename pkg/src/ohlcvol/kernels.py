"""Radial moment kernels of the joint OHLC density and their angular integrals.

The kernel of order ``n`` along the ray with geographic angles
``(theta, phi)`` is

    g_n(theta, phi; gamma) = int_0^inf rho^(2+n) Q(rho * e(theta, phi); gamma) drho,

with ``e`` the unit direction and ``Q`` the joint density of
:func:`ohlcvol.density.joint_pdf`. Angular integrals run over the admissible
region with the ``cos(theta)`` surface weight, so ``int g_0 = 1`` and
``int g_2 = E[R^2]``.

Two independent routes compute ``g_n``:

* :func:`g_n_radial` integrates the density along the ray with adaptive
  quadrature.
* :func:`g_n_series` swaps the image series and the radial integral. Each
  term is a Gaussian moment integral with a closed form, and the slowly
  decaying series is accelerated by Richardson extrapolation.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import erfcx, gamma as gamma_fn

from .core import DomainError, check_gamma, unit_direction
from .density import ConvergenceError, SeriesControl, joint_pdf_arrays

__all__ = [
    "QuadratureConfig",
    "KernelValue",
    "AngularGrid",
    "DEFAULT_QUADRATURE",
    "radial_constant",
    "gaussian_moments",
    "moment_integral",
    "kernel_arrays",
    "g_n_series",
    "g_n_radial",
    "angular_grid",
    "angular_integral",
    "kernels_at",
    "cal_E",
    "cal_F",
    "cal_E_cross",
    "cal_M_cross",
    "k_moments",
    "estimator_moments",
]

_ORDERS = (0, 1, 2, 4)
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
# below this drift-tilt the upward moment recurrence loses digits
_BETA_SWITCH = -3.0
_CF_EXTRA = 60


@dataclass(frozen=True)
class QuadratureConfig:
    """Accuracy settings for kernels and angular integrals.

    Parameters
    ----------
    radial_rule : {"tan", "exp"}
        Map of the half line used by :func:`g_n_radial`: ``rho = tan(pi s / 2)``
        on ``(0, 1)`` or ``rho = exp(x)``.
    radial_tol : float
        Relative tolerance of radial quadrature.
    angular_grid : tuple of int
        Gauss-Legendre nodes ``(n_phi, n_theta)`` of the base angular rule.
    angular_tol : float
        Relative tolerance of angular integrals; the rule is compared with
        its half-size version and doubled until they agree.
    series_terms : int
        Largest ``|m|`` summed in the kernel series before extrapolation.
    max_refinements : int
        Number of angular grid doublings allowed.
    """

    radial_rule: str = "tan"
    radial_tol: float = 1e-9
    angular_grid: tuple = (64, 64)
    angular_tol: float = 1e-7
    series_terms: int = 128
    max_refinements: int = 2

    def __post_init__(self):
        if self.radial_rule not in ("tan", "exp"):
            raise DomainError("radial_rule must be 'tan' or 'exp'")
        for name in ("radial_tol", "angular_tol"):
            if not 0 < getattr(self, name) < 1:
                raise DomainError(f"0 < {name} < 1 violated")
        n_phi, n_theta = self.angular_grid
        if min(n_phi, n_theta) < 8:
            raise DomainError("angular panel counts must be >= 8")
        if self.series_terms < 16 or self.series_terms % 8:
            raise DomainError("series_terms must be a multiple of 8, at least 16")
        object.__setattr__(self, "angular_grid", (int(n_phi), int(n_theta)))


DEFAULT_QUADRATURE = QuadratureConfig()


@dataclass(frozen=True)
class KernelValue:
    """One kernel evaluation with its error estimate."""

    n: int
    theta: float
    phi: float
    gamma: float
    value: float
    est_error: float


def radial_constant(n):
    """``2^((1+n)/2) (2+n) Gamma((3+n)/2)``, the drift-free moment constant.

    For ``gamma = 0`` the moment integral is this constant divided by
    ``|2x - c|^(3+n)``.
    """
    return 2.0 ** ((1 + n) / 2) * (2 + n) * gamma_fn((3 + n) / 2)


def gaussian_moments(beta, kmax):
    """``K_k(beta) = int_0^inf t^k exp(beta t - t^2/2) dt`` for ``k <= kmax``.

    Upward recurrence ``K_{k+1} = beta K_k + k K_{k-1}`` where it is stable;
    for strongly negative ``beta`` the ratios ``K_k / K_{k-1}`` come from the
    backward continued fraction instead.

    Returns
    -------
    list of ndarray
        ``kmax + 1`` arrays shaped like ``beta``.
    """
    beta = np.asarray(beta, dtype=float)
    k0 = _SQRT_HALF_PI * erfcx(-beta / math.sqrt(2.0))
    out = [k0, 1.0 + beta * k0]
    for k in range(1, kmax):
        out.append(beta * out[k] + k * out[k - 1])
    low = beta < _BETA_SWITCH
    if np.any(low):
        b = beta[low]
        top = kmax + _CF_EXTRA
        ratio = 0.5 * (b + np.sqrt(b * b + 4.0 * (top + 1)))
        ratios = [None] * (top + 1)
        for k in range(top, 0, -1):
            ratio = k / (ratio - b)
            ratios[k] = ratio
        val = k0[low]
        for k in range(1, kmax + 1):
            val = val * ratios[k]
            out[k] = np.array(out[k], copy=True)
            out[k][low] = val
    return out[: kmax + 1]


def moment_integral(n, x, c, gamma):
    """``int_0^inf rho^(2+n) exp(gamma c rho - c^2 rho^2 / 2) D(x rho, c rho) drho``.

    Closed form ``|c - 2x|^-(3+n) [K_{4+n}(beta) - K_{2+n}(beta)]`` with
    ``beta = gamma c / |c - 2x|``.
    """
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    a = np.abs(c - 2.0 * x)
    K = gaussian_moments(gamma * c / a, 4 + n)
    out = (K[4 + n] - K[2 + n]) / a ** (3 + n)
    return out[()] if np.ndim(out) == 0 else out


def _moment_integral_quad(n, x, c, gamma, tol):
    """Same integral by adaptive quadrature (scalar, for cross-checks)."""

    def f(r):
        return r ** (2 + n) * ((c - 2 * x) ** 2 * r * r - 1.0) * math.exp(
            gamma * c * r - 0.5 * (c - 2 * x) ** 2 * r * r
        )

    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=tol, limit=200)
    return val


def _levels(terms):
    return [terms // 8, terms // 4, terms // 2, terms]


def _richardson(partials, n):
    """Extrapolate partial sums at M, 2M, 4M, ... with tails ~ M^-(n+1), M^-(n+2), ..."""
    table = [list(partials)]
    for j in range(len(partials) - 1):
        p = n + 1 + j
        prev = table[-1]
        f = 2.0**p
        table.append([(f * prev[i + 1] - prev[i]) / (f - 1.0) for i in range(len(prev) - 1)])
    best = table[-1][0]
    err = np.abs(best - table[-2][-1])
    return best, err


def kernel_arrays(theta, phi, gamma, orders=_ORDERS, terms=128, moments=None):
    """Kernels ``g_n`` for all requested orders at arrays of angles.

    Parameters
    ----------
    theta, phi : array_like
        Geographic angles, broadcast together.
    gamma : float
    orders : iterable of int
        Subset of ``{0, 1, 2, 4}``.
    terms : int
        Largest ``|m|``; partial sums at ``terms/8, terms/4, terms/2, terms``
        feed the extrapolation.
    moments : callable, optional
        Replacement for :func:`moment_integral` with signature
        ``(n, x, c, gamma)``; used for cross-checks.

    Returns
    -------
    values, errors : dict
        Arrays keyed by order.
    """
    gamma = check_gamma(gamma)
    orders = tuple(sorted(set(orders)))
    if not set(orders) <= set(_ORDERS):
        raise DomainError("kernel orders must be among 0, 1, 2, 4")
    ht, lt, ct = unit_direction(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    ht, lt, ct = np.broadcast_arrays(ht, lt, ct)
    delta = ht - lt
    kmax = 4 + max(orders)
    sums = {n: np.zeros(ht.shape) for n in orders}
    partial = {n: [] for n in orders}
    levels = _levels(terms)

    def add(x, weight):
        if moments is None:
            a = np.abs(ct - 2.0 * x)
            K = gaussian_moments(gamma * ct / a, kmax)
            for n in orders:
                sums[n] += weight * (K[4 + n] - K[2 + n]) / a ** (3 + n)
        else:
            for n in orders:
                sums[n] += weight * moments(n, x, ct, gamma)

    for m in range(1, terms + 1):
        for mm in (m, -m):
            add(mm * delta, float(mm * mm))
            if mm != 1:
                add(mm * delta + lt, float(mm * (1 - mm)))
        if m in levels:
            for n in orders:
                partial[n].append(sums[n].copy())

    pref = 4.0 / math.sqrt(2.0 * math.pi) * math.exp(-0.5 * gamma * gamma)
    values, errors = {}, {}
    for n in orders:
        best, err = _richardson(partial[n], n)
        values[n] = pref * best
        errors[n] = pref * err
    return values, errors


def _strictly_inside(theta, phi):
    if not -math.pi / 2 < phi < 0:
        return False
    lo, hi = math.atan(math.sin(phi)), math.atan(math.cos(phi))
    return lo < theta < hi


def _check_order(n):
    if n not in _ORDERS:
        raise DomainError("kernel order must be one of 0, 1, 2, 4")


def g_n_series(n, theta, phi, gamma, cfg=DEFAULT_QUADRATURE, moments="closed"):
    """Kernel ``g_n`` at one direction from the image series.

    Parameters
    ----------
    moments : {"closed", "quadrature"}
        Evaluate each moment integral in closed form or by adaptive
        quadrature.
    """
    _check_order(n)
    gamma = check_gamma(gamma)
    if not _strictly_inside(theta, phi):
        return KernelValue(n, theta, phi, gamma, 0.0, 0.0)
    if moments == "closed":
        fn = None
    elif moments == "quadrature":
        tol = min(cfg.radial_tol, 1e-10)

        def fn(k, x, c, g):
            return np.array(
                [_moment_integral_quad(k, xi, ci, g, tol) for xi, ci in zip(np.ravel(x), np.ravel(c))]
            ).reshape(np.shape(x))

    else:
        raise DomainError("moments must be 'closed' or 'quadrature'")
    vals, errs = kernel_arrays(
        np.array([theta]), np.array([phi]), gamma, (n,), cfg.series_terms, fn
    )
    return KernelValue(n, theta, phi, gamma, float(vals[n][0]), float(errs[n][0]))


def g_n_radial(n, theta, phi, gamma, cfg=DEFAULT_QUADRATURE, ctl=SeriesControl()):
    """Kernel ``g_n`` at one direction by adaptive radial quadrature.

    Rays on the edge of the admissible region return 0, since the density
    vanishes on the edge of its support.

    Raises
    ------
    ConvergenceError
        When the quadrature error estimate exceeds ``radial_tol``.
    """
    _check_order(n)
    gamma = check_gamma(gamma)
    if not _strictly_inside(theta, phi):
        return KernelValue(n, theta, phi, gamma, 0.0, 0.0)
    h, l, c = (float(v) for v in unit_direction(theta, phi))

    def q(rho):
        return rho ** (2 + n) * float(joint_pdf_arrays(rho * h, rho * l, rho * c, gamma, ctl))

    opts = dict(epsabs=0.0, epsrel=cfg.radial_tol, limit=400)
    if cfg.radial_rule == "tan":

        def f(s):
            rho = math.tan(0.5 * math.pi * s)
            return q(rho) * 0.5 * math.pi * (1.0 + rho * rho)

        val, err = integrate.quad(f, 0.0, 1.0, **opts)
    else:

        def f(x):
            rho = math.exp(x)
            return q(rho) * rho

        val, err = integrate.quad(f, -8.0, 5.5, **opts)
    if err > max(cfg.radial_tol * abs(val), 1e-300) * 10:
        raise ConvergenceError(f"radial quadrature did not converge (value {val})", err)
    return KernelValue(n, theta, phi, gamma, val, err)


@dataclass(frozen=True)
class AngularGrid:
    """Tensor Gauss-Legendre rule on the admissible angular region.

    ``weight`` already contains the ``cos(theta)`` surface factor and the
    Jacobian of the per-``phi`` map ``theta = s + (c - s) t``.
    """

    theta: np.ndarray
    phi: np.ndarray
    weight: np.ndarray

    @property
    def shape(self):
        return self.theta.shape


@lru_cache(maxsize=16)
def angular_grid(n_phi, n_theta):
    """Cached :class:`AngularGrid` with ``n_phi x n_theta`` nodes."""
    xp, wp = np.polynomial.legendre.leggauss(n_phi)
    xt, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = -0.25 * math.pi * (xp + 1.0)
    wphi = 0.25 * math.pi * wp
    lo = np.arctan(np.sin(phi))
    hi = np.arctan(np.cos(phi))
    half = 0.5 * (hi - lo)
    theta = lo[:, None] + half[:, None] * (xt[None, :] + 1.0)
    weight = wphi[:, None] * half[:, None] * wt[None, :] * np.cos(theta)
    phi2 = np.broadcast_to(phi[:, None], theta.shape).copy()
    for arr in (theta, phi2, weight):
        arr.setflags(write=False)
    return AngularGrid(theta, phi2, weight)


def _rule(cfg, level):
    n_phi, n_theta = cfg.angular_grid
    return angular_grid(n_phi << level, n_theta << level)


def _half_rule(cfg):
    n_phi, n_theta = cfg.angular_grid
    return angular_grid(max(4, n_phi // 2), max(4, n_theta // 2))


def _pairwise(values):
    # np.sum on a contiguous 1-D array uses pairwise summation
    return float(np.sum(np.ascontiguousarray(values).ravel()))


def angular_integral(f, cfg=DEFAULT_QUADRATURE, return_error=False):
    """Integrate ``f(theta, phi)`` over the admissible region with ``cos(theta)`` weight.

    The base rule is checked against the rule with half as many nodes in each
    direction and doubled until the two agree to ``angular_tol``.

    Parameters
    ----------
    f : callable
        Vectorized integrand taking arrays ``theta, phi``.
    return_error : bool
        Also return the error estimate.

    Raises
    ------
    ConvergenceError
        If ``max_refinements`` doublings do not reach the tolerance.
    """

    def apply(grid):
        return _pairwise(grid.weight * f(grid.theta, grid.phi))

    coarse = apply(_half_rule(cfg))
    for level in range(cfg.max_refinements + 1):
        fine = apply(_rule(cfg, level))
        err = abs(fine - coarse)
        if err <= cfg.angular_tol * abs(fine) or err == 0.0:
            return (fine, err) if return_error else fine
        coarse = fine
    raise ConvergenceError(
        f"angular quadrature did not reach relative tolerance {cfg.angular_tol}", err
    )


_KERNEL_CACHE = OrderedDict()
_KERNEL_CACHE_SIZE = 48


def kernels_at(theta, phi, gamma, cfg=DEFAULT_QUADRATURE):
    """Kernels ``{0, 1, 2, 4}`` at node arrays, memoized per node set and drift.

    The returned arrays are read-only.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    gamma = check_gamma(gamma) + 0.0  # fold -0.0 into 0.0
    key = (gamma, cfg.series_terms, theta.shape, hash(theta.tobytes()), hash(phi.tobytes()))
    hit = _KERNEL_CACHE.get(key)
    if hit is not None:
        _KERNEL_CACHE.move_to_end(key)
        return hit
    vals, _ = kernel_arrays(theta, phi, gamma, _ORDERS, cfg.series_terms)
    for v in vals.values():
        v.setflags(write=False)
    _KERNEL_CACHE[key] = vals
    if len(_KERNEL_CACHE) > _KERNEL_CACHE_SIZE:
        _KERNEL_CACHE.popitem(last=False)
    return vals


def cal_E(gamma0, cfg=DEFAULT_QUADRATURE):
    """Angular integral of ``g_2^2 / g_4``; the lower variance bound is ``1/E - 1``."""

    def f(t, p):
        g = kernels_at(t, p, gamma0, cfg)
        return g[2] ** 2 / g[4]

    return angular_integral(f, cfg)


def cal_F(gamma0, cfg=DEFAULT_QUADRATURE):
    """Angular integral of ``g_1^2 / g_2``; the lower volatility bound is ``1/F - 1``."""

    def f(t, p):
        g = kernels_at(t, p, gamma0, cfg)
        return g[1] ** 2 / g[2]

    return angular_integral(f, cfg)


def cal_E_cross(gamma, gamma0, cfg=DEFAULT_QUADRATURE):
    """Angular integral of ``g_2(gamma) g_2(gamma0) / g_4(gamma0)``."""

    def f(t, p):
        g = kernels_at(t, p, gamma, cfg)
        g0 = kernels_at(t, p, gamma0, cfg)
        return g[2] * g0[2] / g0[4]

    return angular_integral(f, cfg)


def cal_M_cross(gamma, gamma0, cfg=DEFAULT_QUADRATURE):
    """Angular integral of ``g_4(gamma) g_2(gamma0)^2 / g_4(gamma0)^2``."""

    def f(t, p):
        g = kernels_at(t, p, gamma, cfg)
        g0 = kernels_at(t, p, gamma0, cfg)
        return g[4] * (g0[2] / g0[4]) ** 2

    return angular_integral(f, cfg)


def _diagram_values(diagram, t, p):
    fn = getattr(diagram, "exact", None)
    if fn is not None:
        return fn(t, p)
    return diagram(t, p)


def k_moments(diagram, n, gamma, cfg=DEFAULT_QUADRATURE):
    """Raw moment ``E[estimate^n | gamma]`` of a canonical estimator.

    For a variance diagram this is the angular integral of
    ``g_{2n} * diagram^n``; for a volatility diagram of ``g_n * diagram^n``.

    Parameters
    ----------
    diagram : DiagramTable or callable
        Anything with an ``exact(theta, phi)`` method and a ``kind``
        attribute, or a plain callable treated as a variance diagram.
    n : {1, 2}
    """
    if n not in (1, 2):
        raise DomainError("moment order must be 1 or 2")
    kind = getattr(diagram, "kind", "variance")
    order = 2 * n if kind == "variance" else n

    def f(t, p):
        g = kernels_at(t, p, gamma, cfg)
        return g[order] * _diagram_values(diagram, t, p) ** n

    return angular_integral(f, cfg)


def estimator_moments(diagram, gamma, cfg=DEFAULT_QUADRATURE):
    """Mean and variance of a canonical estimator at drift ``gamma``."""
    m1 = k_moments(diagram, 1, gamma, cfg)
    m2 = k_moments(diagram, 2, gamma, cfg)
    return m1, m2 - m1 * m1
