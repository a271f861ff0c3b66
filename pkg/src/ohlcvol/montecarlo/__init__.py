"""Discrete drifted random-walk simulation of normalized OHLC triples.

A path of ``N`` steps is ``v(n) = gamma n / N + (1 / sqrt(N)) sum_{k<=n} e_k``
with unit-variance innovations ``e_k``; its normalized high and low are
the extremes of ``v`` over ``n = 0..N`` (the starting point 0 included) and
its close is ``v(N)``. Several drifts share one noise path, so estimates at
different drifts are computed from common random numbers.

The innovations come from a counter-based stream keyed by
``(seed, path_id, step)``; see :mod:`ohlcvol.montecarlo._rng`. A compiled
kernel is used when it was built, otherwise an equivalent numpy kernel;
both produce bit-identical triples. Set ``OHLCVOL_BACKEND=numpy`` to force
the fallback.
"""
from __future__ import annotations

import csv
import math
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..core import DomainError, NormalizedTriple, check_gamma
from . import _fallback, _rng

try:
    if os.environ.get("OHLCVOL_BACKEND", "").lower() == "numpy":
        raise ImportError("numpy backend requested")
    from . import _core
except ImportError:
    _core = None

BACKEND = "compiled" if _core is not None else "numpy"

__all__ = [
    "BACKEND",
    "SimConfig",
    "PathSummary",
    "MomentEstimate",
    "simulate_extremes",
    "simulate_path",
    "path_extremes",
    "simulate_triples",
    "clear_cache",
    "mc_estimator_moments",
    "moments_of",
    "convergence_study",
    "write_study_csv",
    "STUDY_COLUMNS",
]

STUDY_COLUMNS = ("N", "estimator", "gamma", "mean", "variance", "std_error")
_CHUNK = 4096
_CACHE_LIMIT = 256


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Attributes
    ----------
    steps_N : int
        Steps per path, at least 2.
    paths_M : int
        Number of paths, at least 1.
    gamma : float
        Normalized drift.
    seed : int
        64-bit stream seed.
    innovation : {"gaussian", "student_t"}
    nu : float or None
        Degrees of freedom for Student-t innovations, greater than 2.
    """

    steps_N: int = 100_000
    paths_M: int = 100_000
    gamma: float = 0.0
    seed: int = 0
    innovation: str = "gaussian"
    nu: float | None = None

    def __post_init__(self):
        if int(self.steps_N) != self.steps_N or self.steps_N < 2:
            raise DomainError("steps_N >= 2 violated")
        if int(self.paths_M) != self.paths_M or self.paths_M < 1:
            raise DomainError("paths_M >= 1 violated")
        object.__setattr__(self, "steps_N", int(self.steps_N))
        object.__setattr__(self, "paths_M", int(self.paths_M))
        object.__setattr__(self, "gamma", check_gamma(self.gamma))
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise DomainError("seed must be an integer in [0, 2**64)")
        object.__setattr__(self, "seed", int(self.seed))
        if self.innovation not in ("gaussian", "student_t"):
            raise DomainError("innovation must be 'gaussian' or 'student_t'")
        if self.innovation == "student_t":
            if self.nu is None or not self.nu > 2 or not math.isfinite(self.nu):
                raise DomainError("nu > 2 violated")


@dataclass(frozen=True)
class PathSummary:
    """Normalized triple of one simulated path."""

    triple: NormalizedTriple
    path_id: int


@dataclass(frozen=True)
class MomentEstimate:
    """Sample moments of a canonical estimator.

    Unpacks as ``(mean, variance, std_error)``.
    """

    mean: float
    variance: float
    std_error: float
    variance_se: float
    count: int

    def __iter__(self):
        return iter((self.mean, self.variance, self.std_error))


def _innovation_flags(innovation, nu):
    if innovation == "student_t":
        return 1, float(nu)
    return 0, 4.0


def simulate_extremes(seed, first_path, n_paths, n_steps, gammas, innovation="gaussian", nu=None,
                      backend=None):
    """Triples for paths ``first_path .. first_path + n_paths - 1``.

    Returns
    -------
    ndarray
        Shape ``(n_paths, len(gammas), 3)`` holding ``(h, l, c)``.
    """
    gammas = np.atleast_1d(np.asarray(gammas, dtype=np.float64))
    drifts = np.ascontiguousarray(gammas / math.sqrt(float(n_steps)))
    student, nu_val = _innovation_flags(innovation, nu)
    backend = backend or BACKEND
    if backend == "compiled":
        if _core is None:
            raise DomainError("compiled backend is not available")
        return _core.simulate_extremes(
            int(seed), int(first_path), int(n_paths), int(n_steps), drifts, student, nu_val,
            _rng.ZIG_X, _rng.ZIG_RATIO, _rng.ZIG_R,
        )
    if backend == "numpy":
        return _fallback.simulate_extremes(
            int(seed), int(first_path), int(n_paths), int(n_steps), drifts, student, nu_val
        )
    raise DomainError(f"unknown backend {backend!r}")


def simulate_path(cfg, path_id):
    """Triple of path ``path_id``; deterministic in ``(cfg.seed, path_id)``."""
    out = simulate_extremes(
        cfg.seed, path_id, 1, cfg.steps_N, [cfg.gamma], cfg.innovation, cfg.nu
    )[0, 0]
    return PathSummary(NormalizedTriple(*(float(v) for v in out)), int(path_id))


def path_extremes(increments, gamma):
    """Triple of a path built from an explicit innovation sequence.

    Parameters
    ----------
    increments : array_like
        ``e_1 .. e_N``.
    gamma : float
    """
    e = np.asarray(increments, dtype=float)
    n = e.size
    if n < 2:
        raise DomainError("at least two increments are needed")
    v = (np.cumsum(e) + gamma / math.sqrt(n) * np.arange(1, n + 1)) / math.sqrt(n)
    return NormalizedTriple(max(float(v.max()), 0.0), min(float(v.min()), 0.0), float(v[-1]))


_CACHE = OrderedDict()


def clear_cache():
    """Forget simulated triples kept for reuse."""
    _CACHE.clear()


def _run(seed, n_steps, n_paths, gammas, innovation, nu, workers):
    if workers <= 1 or n_paths <= _CHUNK:
        return simulate_extremes(seed, 0, n_paths, n_steps, gammas, innovation, nu)
    starts = range(0, n_paths, _CHUNK)

    def job(start):
        return simulate_extremes(
            seed, start, min(_CHUNK, n_paths - start), n_steps, gammas, innovation, nu
        )

    # chunks are concatenated in path order, so the result is independent of
    # the number of workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.concatenate(list(pool.map(job, starts)), axis=0)


def simulate_triples(steps_N, paths_M, gammas, seed=0, innovation="gaussian", nu=None,
                     workers=1, cache=True):
    """Triples for ``paths_M`` paths under each drift in ``gammas``.

    Results are cached per ``(seed, steps_N, paths_M, innovation, nu, gamma)``
    within the process; drifts already simulated are not recomputed, since
    each drift's triples do not depend on which other drifts share the run.

    Returns
    -------
    ndarray
        Shape ``(paths_M, len(gammas), 3)``.
    """
    SimConfig(steps_N, paths_M, 0.0, seed, innovation, nu)
    gammas = [check_gamma(g) for g in np.atleast_1d(gammas)]
    base = (int(seed), int(steps_N), int(paths_M), innovation, nu if innovation == "student_t" else None)
    found = {g: _CACHE[base + (g,)] for g in gammas if base + (g,) in _CACHE}
    missing = [g for g in dict.fromkeys(gammas) if g not in found]
    if missing:
        fresh = _run(seed, steps_N, paths_M, missing, innovation, nu, workers)
        for j, g in enumerate(missing):
            arr = np.ascontiguousarray(fresh[:, j, :])
            arr.setflags(write=False)
            found[g] = arr
            if cache:
                _CACHE[base + (g,)] = arr
                while len(_CACHE) > _CACHE_LIMIT:
                    _CACHE.popitem(last=False)
    out = np.empty((int(paths_M), len(gammas), 3))
    for j, g in enumerate(gammas):
        out[:, j, :] = found[g]
    return out


def _apply(estimator, triples):
    h, l, c = triples[:, 0], triples[:, 1], triples[:, 2]
    if hasattr(estimator, "estimate"):
        return np.asarray(estimator.estimate(h, l, c), dtype=float)
    return np.asarray(estimator(h, l, c), dtype=float)


def moments_of(values):
    """Sample mean, variance and their standard errors."""
    x = np.asarray(values, dtype=float).ravel()
    m = x.size
    mean = float(np.sum(x) / m)
    dev = x - mean
    d2 = dev * dev
    var = float(np.sum(d2) / (m - 1)) if m > 1 else 0.0
    m4 = float(np.sum(d2 * d2) / m)
    se = math.sqrt(var / m)
    var_se = math.sqrt(max(m4 - var * var, 0.0) / m)
    return MomentEstimate(mean, var, se, var_se, m)


def mc_estimator_moments(cfg, estimator, workers=1):
    """Moments of a canonical estimator over ``cfg.paths_M`` simulated paths.

    Parameters
    ----------
    cfg : SimConfig
    estimator : DiagramTable or callable
        Either a diagram (its ``estimate`` method is used) or a function of
        arrays ``(h, l, c)``.
    """
    triples = simulate_triples(
        cfg.steps_N, cfg.paths_M, [cfg.gamma], cfg.seed, cfg.innovation, cfg.nu, workers
    )[:, 0, :]
    return moments_of(_apply(estimator, triples))


def _default_estimators():
    from ..estimators import gk_canonical, rs_canonical

    return {"RS": rs_canonical, "GK": gk_canonical}


def convergence_study(gammas, N_list, M, seed=0, estimators=None, workers=1):
    """Estimator moments as the number of steps grows.

    Returns
    -------
    list of dict
        One row per ``(N, estimator, gamma)`` with keys :data:`STUDY_COLUMNS`.
    """
    estimators = estimators or _default_estimators()
    rows = []
    for n in N_list:
        triples = simulate_triples(int(n), int(M), gammas, seed, workers=workers)
        for name, est in estimators.items():
            for j, g in enumerate(gammas):
                mom = moments_of(_apply(est, triples[:, j, :]))
                rows.append(
                    {
                        "N": int(n),
                        "estimator": name,
                        "gamma": float(g),
                        "mean": mom.mean,
                        "variance": mom.variance,
                        "std_error": mom.std_error,
                    }
                )
    return rows


def write_study_csv(rows, path):
    """Write study rows as ``N,estimator,gamma,mean,variance,std_error``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STUDY_COLUMNS)
        for r in rows:
            w.writerow(
                [
                    r["N"],
                    r["estimator"],
                    repr(float(r["gamma"])),
                    repr(float(r["mean"])),
                    repr(float(r["variance"])),
                    repr(float(r["std_error"])),
                ]
            )
