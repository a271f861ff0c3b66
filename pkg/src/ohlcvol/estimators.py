"""Homogeneous OHLC variance and volatility estimators.

A homogeneous variance estimator has the form ``R^2 * phi(theta, phi)`` in
geographic coordinates, a volatility estimator ``R * psi(theta, phi)``. The
angular factor is called the diagram. This module builds diagrams (classic
closed forms and the most efficient ones from kernel ratios), tabulates
them, applies them to bars, and derives moments, bounds and full pdfs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .core import DomainError, OhlcBar, check_gamma, spherical_arrays, unit_direction
from .density import joint_pdf_arrays
from .kernels import (
    DEFAULT_QUADRATURE,
    cal_E,
    cal_F,
    estimator_moments,
    angular_grid,
    kernel_arrays,
    k_moments,
)

__all__ = [
    "GK_COEFFS",
    "PARKINSON_CONST",
    "NegativeEstimateWarning",
    "DiagramTable",
    "EstimateResult",
    "rs_canonical",
    "gk_canonical",
    "parkinson_canonical",
    "rs_variance",
    "gk_variance",
    "parkinson_variance",
    "rs_volatility",
    "gk_volatility",
    "parkinson_volatility",
    "classic_diagram",
    "efficient_variance_diagram",
    "efficient_volatility_diagram",
    "volatility_from_variance",
    "lower_bound_variance",
    "lower_bound_volatility",
    "apply_diagram",
    "renormalize",
    "estimator_pdf_variance",
    "estimator_pdf_volatility",
    "diagram_moments",
]

GK_COEFFS = (0.511, 0.019, 0.383)
PARKINSON_CONST = 1.0 / (4.0 * math.log(2.0))
TABLE_SIZE = 128


class NegativeEstimateWarning(UserWarning):
    """A quadratic estimator returned a negative variance."""


# ---------------------------------------------------------------- classic forms


def rs_canonical(h, l, c):
    """Rogers-Satchell ``h (h - c) + l (l - c)`` on normalized arrays."""
    return h * (h - c) + l * (l - c)


def gk_canonical(h, l, c):
    """Garman-Klass ``k1 (h - l)^2 - k2 (c (h + l) - 2 h l) - k3 c^2``."""
    k1, k2, k3 = GK_COEFFS
    return k1 * (h - l) ** 2 - k2 * (c * (h + l) - 2.0 * h * l) - k3 * c * c


def parkinson_canonical(h, l, c):
    """Parkinson ``(h - l)^2 / (4 ln 2)``."""
    return PARKINSON_CONST * (h - l) ** 2


def _bar_value(bar, fn):
    h, l, c = bar.offsets()
    return float(fn(h, l, c)) / bar.horizon


def rs_variance(bar):
    """Rogers-Satchell variance per unit time of one bar."""
    return _bar_value(bar, rs_canonical)


def gk_variance(bar):
    """Garman-Klass variance per unit time; negative values are kept and warned about."""
    v = _bar_value(bar, gk_canonical)
    if v < 0:
        warnings.warn(f"Garman-Klass estimate is negative ({v})", NegativeEstimateWarning)
    return v


def parkinson_variance(bar):
    """Parkinson variance per unit time."""
    return _bar_value(bar, parkinson_canonical)


def rs_volatility(bar):
    return math.sqrt(rs_variance(bar))


def gk_volatility(bar):
    return math.sqrt(max(gk_variance(bar), 0.0))


def parkinson_volatility(bar):
    return math.sqrt(parkinson_variance(bar))


# ---------------------------------------------------------------- diagrams


def _t_of(theta, phi):
    lo = np.arctan(np.sin(phi))
    hi = np.arctan(np.cos(phi))
    return (theta - lo) / (hi - lo)


def _theta_of(t, phi):
    lo = np.arctan(np.sin(phi))
    hi = np.arctan(np.cos(phi))
    return lo + t * (hi - lo)


@dataclass(frozen=True, eq=False)
class DiagramTable:
    """Tabulated diagram over the admissible angular region.

    The table is indexed by ``phi`` in ``[-pi/2, 0]`` and the per-``phi``
    coordinate ``t = (theta - s(phi)) / (c(phi) - s(phi))`` in ``[0, 1]``
    at interior Chebyshev nodes, and interpolated bicubically. ``exact`` evaluates the diagram directly
    and is used by quadratures; closed-form diagrams also use it for lookup.

    Attributes
    ----------
    kind : {"variance", "volatility"}
    name : str
    gamma0 : float or None
        Reference drift of efficient diagrams.
    phi_nodes, t_nodes : ndarray
    values : ndarray
        Shape ``(len(phi_nodes), len(t_nodes))``.
    exact : callable
        Vectorized ``exact(theta, phi)``.
    closed_form : bool
        True when ``exact`` is cheap enough for per-bar evaluation.
    """

    kind: str
    name: str
    gamma0: float | None
    phi_nodes: np.ndarray
    t_nodes: np.ndarray
    values: np.ndarray
    exact: object
    closed_form: bool = False
    _spline: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("variance", "volatility"):
            raise DomainError("diagram kind must be 'variance' or 'volatility'")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("diagram table has non-finite values")
        self.values.setflags(write=False)
        # the bounding box reaches the domain edges so the end pieces extend there
        spline = RectBivariateSpline(
            self.phi_nodes,
            self.t_nodes,
            self.values,
            bbox=[-0.5 * math.pi, 0.0, 0.0, 1.0],
            kx=3,
            ky=3,
            s=0,
        )
        object.__setattr__(self, "_spline", spline)

    @classmethod
    def from_function(cls, kind, name, gamma0, exact, closed_form=False, size=TABLE_SIZE):
        # Chebyshev-Gauss nodes: dense near the edges but never on them,
        # since the kernels vanish at two corners and their ratio is 0/0 there
        x = 0.5 * (1.0 - np.cos(math.pi * (np.arange(size) + 0.5) / size))
        phi_nodes = -0.5 * math.pi * x[::-1]
        t_nodes = x
        theta = _theta_of(t_nodes[None, :], phi_nodes[:, None])
        phi = np.broadcast_to(phi_nodes[:, None], theta.shape)
        values = np.array(exact(theta, phi), dtype=float)
        return cls(kind, name, gamma0, phi_nodes, t_nodes, values, exact, closed_form)

    def interpolate(self, theta, phi):
        """Bicubic lookup at arbitrary admissible angles."""
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        if np.any(phi < -0.5 * math.pi - 1e-12) or np.any(phi > 1e-12):
            raise DomainError("phi outside the tabulated range")
        t = np.clip(_t_of(theta, phi), 0.0, 1.0)
        out = self._spline.ev(phi, t)
        return out[()] if out.ndim == 0 else out

    def __call__(self, theta, phi):
        if self.closed_form:
            return self.exact(np.asarray(theta, float), np.asarray(phi, float))
        return self.interpolate(theta, phi)

    def estimate(self, h, l, c):
        """Canonical estimates for arrays of normalized triples."""
        r, theta, phi = spherical_arrays(h, l, c)
        d = self(theta, phi)
        out = r * r * d if self.kind == "variance" else r * d
        return np.where(r > 0, out, 0.0)

    def scaled(self, factor, name=None):
        """Diagram multiplied by a constant."""
        factor = float(factor)
        exact = self.exact

        def scaled_exact(theta, phi):
            return factor * exact(theta, phi)

        return DiagramTable(
            self.kind,
            name or self.name,
            self.gamma0,
            self.phi_nodes,
            self.t_nodes,
            self.values * factor,
            scaled_exact,
            self.closed_form,
        )

    def grid_angles(self):
        """Arrays ``(phi, theta)`` of the table nodes."""
        theta = _theta_of(self.t_nodes[None, :], self.phi_nodes[:, None])
        phi = np.broadcast_to(self.phi_nodes[:, None], theta.shape)
        return phi, theta

    def to_csv(self, path):
        """Write ``phi,theta,value`` rows, row-major over the table."""
        phi, theta = self.grid_angles()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("phi,theta,value\n")
            for p, t, v in zip(phi.ravel(), theta.ravel(), self.values.ravel()):
                fh.write(f"{p:.17g},{t:.17g},{v:.17g}\n")


@dataclass(frozen=True)
class EstimateResult:
    """Estimate for one bar.

    ``point`` is in variance or volatility units per unit time,
    ``canonical`` is the same estimate divided by ``sigma^2`` or ``sigma``
    (equal to ``point`` when ``sigma`` is not supplied), and
    ``diagram_value`` is the diagram at the bar's angles.
    """

    point: float
    canonical: float
    diagram_value: float


def _angular_classic(fn):
    def exact(theta, phi):
        h, l, c = unit_direction(theta, phi)
        return fn(h, l, c)

    return exact


_CLASSIC = {"RS": rs_canonical, "GK": gk_canonical, "PK": parkinson_canonical}


def classic_diagram(kind, quantity="variance"):
    """Closed-form diagram of a classic estimator.

    Parameters
    ----------
    kind : {"RS", "GK", "PK"}
        Rogers-Satchell, Garman-Klass or Parkinson.
    quantity : {"variance", "volatility"}
        The volatility diagram is the square root of the variance diagram.
    """
    key = kind.upper()
    if key not in _CLASSIC:
        raise DomainError(f"unknown classic estimator {kind!r}")
    base = _angular_classic(_CLASSIC[key])
    if quantity == "variance":
        return DiagramTable.from_function("variance", key, None, base, closed_form=True)
    if quantity == "volatility":

        def root(theta, phi):
            return np.sqrt(np.maximum(base(theta, phi), 0.0))

        return DiagramTable.from_function("volatility", key, None, root, closed_form=True)
    raise DomainError("quantity must be 'variance' or 'volatility'")


def volatility_from_variance(diagram):
    """Volatility diagram ``sqrt(phi)`` of a variance diagram."""
    if diagram.kind != "variance":
        raise DomainError("expected a variance diagram")
    exact = diagram.exact

    def root(theta, phi):
        return np.sqrt(np.maximum(exact(theta, phi), 0.0))

    return DiagramTable.from_function(
        "volatility", diagram.name, diagram.gamma0, root, diagram.closed_form
    )


def _ratio_exact(num, den, gamma0, norm, cfg):
    def exact(theta, phi):
        vals, _ = kernel_arrays(theta, phi, gamma0, (num, den), cfg.series_terms)
        return vals[num] / vals[den] / norm

    return exact


def efficient_variance_diagram(gamma0, cfg=DEFAULT_QUADRATURE):
    """Most efficient variance diagram at drift ``gamma0``: ``g_2 / (g_4 E(gamma0))``."""
    gamma0 = check_gamma(gamma0)
    norm = cal_E(gamma0, cfg)
    exact = _ratio_exact(2, 4, gamma0, norm, cfg)
    return DiagramTable.from_function("variance", f"EFF({gamma0:g})", gamma0, exact)


def efficient_volatility_diagram(gamma0, cfg=DEFAULT_QUADRATURE):
    """Most efficient volatility diagram at drift ``gamma0``: ``g_1 / (g_2 F(gamma0))``."""
    gamma0 = check_gamma(gamma0)
    norm = cal_F(gamma0, cfg)
    exact = _ratio_exact(1, 2, gamma0, norm, cfg)
    return DiagramTable.from_function("volatility", f"EFF({gamma0:g})", gamma0, exact)


def lower_bound_variance(gamma, cfg=DEFAULT_QUADRATURE):
    """Smallest variance of an unbiased homogeneous canonical variance estimator."""
    return 1.0 / cal_E(check_gamma(gamma), cfg) - 1.0


def lower_bound_volatility(gamma, cfg=DEFAULT_QUADRATURE):
    """Smallest variance of an unbiased homogeneous canonical volatility estimator."""
    return 1.0 / cal_F(check_gamma(gamma), cfg) - 1.0


def apply_diagram(bar, diagram, sigma0=None, sigma=None):
    """Apply a diagram to one bar.

    Parameters
    ----------
    bar : OhlcBar
    diagram : DiagramTable
    sigma0 : float, optional
        Time scale; defaults to ``sqrt(T)``.
    sigma : float, optional
        True volatility, used only to report the canonical value.
    """
    if not isinstance(bar, OhlcBar):
        raise DomainError("expected an OhlcBar")
    if sigma0 is None:
        sigma0 = math.sqrt(bar.horizon)
    h, l, c = bar.offsets()
    r, theta, phi = (float(v) for v in spherical_arrays(h, l, c))
    if r == 0.0:
        return EstimateResult(0.0, 0.0, float(diagram(0.0, 0.0)))
    value = float(diagram(theta, phi))
    if diagram.kind == "variance":
        point = r * r * value / sigma0**2
        canonical = point / sigma**2 if sigma else point
    else:
        point = r * value / sigma0
        canonical = point / sigma if sigma else point
    return EstimateResult(point, canonical, value)


def renormalize(diagram, gamma, cfg=DEFAULT_QUADRATURE):
    """Rescale a diagram so its estimator is unbiased at drift ``gamma``."""
    mean = k_moments(diagram, 1, check_gamma(gamma), cfg)
    if not mean > 0:
        raise DomainError(f"estimator mean {mean} is not positive")
    return diagram.scaled(1.0 / mean)


def _check_positive(values):
    if np.any(values <= 0):
        raise DomainError("diagram must be strictly positive for the pdf transform")


def _pdf(u, diagram, gamma, cfg, kind, chunk=16):
    if diagram.kind != kind:
        raise DomainError(f"expected a {kind} diagram")
    gamma = check_gamma(gamma)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u < 0):
        raise DomainError("u >= 0 violated")
    grid = angular_grid(*cfg.angular_grid)
    d = diagram.exact(grid.theta, grid.phi)
    _check_positive(d)
    h, l, c = unit_direction(grid.theta, grid.phi)
    h, l, c, d, w = (a.ravel() for a in (h, l, c, d, grid.weight))
    out = np.zeros(u.shape)
    for start in range(0, u.size, chunk):
        uu = u[start : start + chunk, None]
        if kind == "variance":
            rho = np.sqrt(uu / d)
            weight = 0.5 * np.sqrt(uu) * w / d**1.5
        else:
            rho = uu / d
            weight = uu * uu * w / d**3
        q = joint_pdf_arrays(rho * h, rho * l, rho * c, gamma)
        out[start : start + chunk] = np.sum(weight * q, axis=1)
    return out


def estimator_pdf_variance(u, diagram, gamma, cfg=DEFAULT_QUADRATURE):
    """Density of a canonical variance estimator at values ``u``."""
    return _pdf(u, diagram, gamma, cfg, "variance")


def estimator_pdf_volatility(u, diagram, gamma, cfg=DEFAULT_QUADRATURE):
    """Density of a canonical volatility estimator at values ``u``."""
    return _pdf(u, diagram, gamma, cfg, "volatility")


def diagram_moments(diagram, gamma, cfg=DEFAULT_QUADRATURE):
    """Mean and variance of the canonical estimator of ``diagram`` at ``gamma``."""
    return estimator_moments(diagram, check_gamma(gamma), cfg)
