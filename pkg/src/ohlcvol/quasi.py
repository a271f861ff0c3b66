"""Quasi-unbiased variance estimators built from efficient diagrams.

An estimator of order ``K`` and band width ``Gamma`` mixes the most
efficient variance diagrams at the drifts ``gamma_i = i Gamma / K``,
``i = -K..K``, with weights chosen so the mixture is exactly unbiased at
every node:

    sum_i h_i eps[i, j] = 1  for every j,   eps[i, j] = E(gamma_j, gamma_i) / E(gamma_i).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainError, check_gamma
from .estimators import DiagramTable, efficient_variance_diagram
from .kernels import DEFAULT_QUADRATURE, angular_integral, cal_E, cal_E_cross, kernels_at

__all__ = [
    "IllConditionedError",
    "QuasiSpec",
    "build_nodes",
    "epsilon_matrix",
    "solve_weights",
    "first_order_weights",
    "build_quasi",
    "composed_diagram",
    "quasi_expectation",
    "quasi_variance",
    "write_weights_csv",
]

CONDITION_LIMIT = 1e12


class IllConditionedError(np.linalg.LinAlgError):
    """The unbiasedness system is singular or nearly so."""

    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = float(condition)


@dataclass(frozen=True)
class QuasiSpec:
    """Solved quasi-unbiased estimator.

    Attributes
    ----------
    order_K : int
    band_width_Gamma : float
    nodes : tuple of float
        ``2K + 1`` drifts, symmetric about 0.
    weights : tuple of float
        Symmetric weights ``h_i``.
    residual : float
        Largest absolute residual of the full ``2K + 1`` system.
    condition : float
        2-norm condition number of the folded system.
    """

    order_K: int
    band_width_Gamma: float
    nodes: tuple
    weights: tuple
    residual: float = 0.0
    condition: float = 1.0


def build_nodes(K, Gamma=1.0):
    """Drift nodes ``i Gamma / K`` for ``i = -K..K`` (``[0.0]`` when ``K = 0``)."""
    if int(K) != K or K < 0:
        raise DomainError("K >= 0 violated")
    K = int(K)
    if K == 0:
        return [0.0]
    if not Gamma > 0:
        raise DomainError("Gamma > 0 violated")
    return [i * Gamma / K for i in range(-K, K + 1)]


def epsilon_matrix(nodes, cfg=DEFAULT_QUADRATURE):
    """``eps[i, j] = E(gamma_j, gamma_i) / E(gamma_i)``; row ``i`` is the diagram node."""
    nodes = [check_gamma(g) for g in nodes]
    n = len(nodes)
    eps = np.empty((n, n))
    for i, gi in enumerate(nodes):
        ei = cal_E(gi, cfg)
        for j, gj in enumerate(nodes):
            eps[i, j] = 1.0 if i == j else cal_E_cross(gj, gi, cfg) / ei
    return eps


def solve_weights(eps, return_info=False):
    """Symmetric weights solving ``eps.T @ h = 1``.

    The system is folded with ``h_i = h_{-i}``, which keeps only the
    equations ``j >= 0``; the folded ``(K+1)``-dimensional system is solved
    directly.

    Parameters
    ----------
    eps : ndarray
        Square matrix of odd size ``2K + 1``.
    return_info : bool
        Also return ``(residual, condition)``.

    Raises
    ------
    IllConditionedError
        If the folded system is singular or its condition number exceeds
        ``1e12``.
    """
    eps = np.asarray(eps, dtype=float)
    n = eps.shape[0]
    if eps.shape != (n, n) or n % 2 != 1:
        raise DomainError("eps must be square with odd size")
    K = n // 2
    folded = np.empty((K + 1, K + 1))
    for jj in range(K + 1):
        j = K + jj
        folded[jj, 0] = eps[K, j]
        for ii in range(1, K + 1):
            folded[jj, ii] = eps[K + ii, j] + eps[K - ii, j]
    cond = np.linalg.cond(folded)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditionedError(
            f"unbiasedness system is ill-conditioned (condition number {cond:.3g}); "
            "use a smaller band width or order",
            cond,
        )
    half = np.linalg.solve(folded, np.ones(K + 1))
    weights = np.concatenate([half[:0:-1], half])
    residual = float(np.max(np.abs(eps.T @ weights - 1.0)))
    if return_info:
        return weights, residual, float(cond)
    return weights


def first_order_weights(eps):
    """Closed-form weights ``(h_0, h_1)`` of the ``K = 1`` system.

    ``h_0 = (2 e10 - e-11 - e11) / (2 e01 e10 - e00 (e-11 + e11))`` and
    ``h_1 = (e00 - e01) / (e00 (e-11 + e11) - 2 e01 e10)``, with ``eij``
    indexed by node number ``-1, 0, 1``.
    """
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (3, 3):
        raise DomainError("first-order weights need a 3x3 matrix")

    def e(i, j):
        return eps[i + 1, j + 1]

    side = e(-1, 1) + e(1, 1)
    h0 = (2 * e(1, 0) - side) / (2 * e(0, 1) * e(1, 0) - e(0, 0) * side)
    h1 = (e(0, 0) - e(0, 1)) / (e(0, 0) * side - 2 * e(0, 1) * e(1, 0))
    return h0, h1


def build_quasi(K, Gamma=1.0, cfg=DEFAULT_QUADRATURE):
    """Nodes, epsilon matrix and solved weights in one :class:`QuasiSpec`."""
    nodes = build_nodes(K, Gamma)
    eps = epsilon_matrix(nodes, cfg)
    weights, residual, cond = solve_weights(eps, return_info=True)
    return QuasiSpec(
        int(K),
        float(Gamma),
        tuple(nodes),
        tuple(float(w) for w in weights),
        residual,
        cond,
    )


def composed_diagram(spec, cfg=DEFAULT_QUADRATURE):
    """Weighted sum of the efficient variance diagrams at the nodes."""
    parts = [efficient_variance_diagram(g, cfg) for g in spec.nodes]
    if len(parts) == 1:
        return parts[0].scaled(spec.weights[0], name="QUASI(K=0)")
    weights = np.array(spec.weights)
    exacts = [p.exact for p in parts]

    def exact(theta, phi):
        return sum(w * f(theta, phi) for w, f in zip(weights, exacts))

    values = sum(w * p.values for w, p in zip(weights, parts))
    first = parts[0]
    return DiagramTable(
        "variance",
        f"QUASI(K={spec.order_K},Gamma={spec.band_width_Gamma:g})",
        None,
        first.phi_nodes,
        first.t_nodes,
        values,
        exact,
    )


def quasi_expectation(spec, gamma, cfg=DEFAULT_QUADRATURE):
    """``E[d | gamma] = sum_i h_i E(gamma, gamma_i) / E(gamma_i)``."""
    gamma = check_gamma(gamma)
    return float(
        sum(w * cal_E_cross(gamma, g, cfg) / cal_E(g, cfg) for w, g in zip(spec.weights, spec.nodes))
    )


def quasi_variance(spec, gamma, cfg=DEFAULT_QUADRATURE):
    """Variance of the composed estimator at drift ``gamma``.

    The second moment is ``sum_ij h_i h_j int g_4(gamma) phi_i phi_j``; the
    diagonal terms are the ``M(gamma, gamma_i)`` functionals.
    """
    gamma = check_gamma(gamma)
    norms = [cal_E(g, cfg) for g in spec.nodes]
    w = np.array(spec.weights)

    def second(t, p):
        g = kernels_at(t, p, gamma, cfg)
        total = 0.0
        for h, g0, e in zip(w, spec.nodes, norms):
            k0 = kernels_at(t, p, g0, cfg)
            total = total + h * k0[2] / (k0[4] * e)
        return g[4] * total * total

    m2 = angular_integral(second, cfg)
    m1 = quasi_expectation(spec, gamma, cfg)
    return m2 - m1 * m1


def write_weights_csv(spec, path):
    """Write ``i,gamma_i,h_i`` with a comment header describing the solve."""
    K = spec.order_K
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# K={K}\n# Gamma={spec.band_width_Gamma:.17g}\n")
        fh.write(f"# residual={spec.residual:.17g}\n# condition={spec.condition:.17g}\n")
        fh.write("i,gamma_i,h_i\n")
        for i, (g, h) in enumerate(zip(spec.nodes, spec.weights), start=-K):
            fh.write(f"{i},{g:.17g},{h:.17g}\n")
