# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path-extremes kernel.

Draws the same counter-based stream as ``_rng`` (see its docstring) and
tracks running maxima and minima of one shared noise path under several
drifts at once.
"""
import numpy as np

from libc.math cimport exp, log, sqrt, fabs
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL
cdef double INV53 = 1.1102230246251565e-16  # 2**-53


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t word(uint64_t key, uint64_t step, uint64_t* sub) noexcept nogil:
    cdef uint64_t w = mix64(key + ((step << 16) | sub[0]) * GOLDEN)
    sub[0] += 1
    return w


cdef inline double u01(uint64_t w) noexcept nogil:
    return (<double>(w >> 11) + 0.5) * INV53


cdef struct Zig:
    const double* x
    const double* ratio
    double r


cdef inline double normal(uint64_t key, uint64_t step, uint64_t* sub, Zig* z) noexcept nogil:
    cdef uint64_t w
    cdef int i
    cdef double u, x, y, f0, f1
    while True:
        w = word(key, step, sub)
        i = <int>(w & 0xFF)
        u = 2.0 * u01(w) - 1.0
        x = u * z.x[i]
        if fabs(u) < z.ratio[i]:
            return x
        if i == 0:
            while True:
                x = log(u01(word(key, step, sub))) / z.r
                y = log(u01(word(key, step, sub)))
                if -2.0 * y >= x * x:
                    if u < 0:
                        return x - z.r
                    return z.r - x
        f0 = exp(-0.5 * (z.x[i] * z.x[i] - x * x))
        f1 = exp(-0.5 * (z.x[i + 1] * z.x[i + 1] - x * x))
        if f1 + (f0 - f1) * u01(word(key, step, sub)) < 1.0:
            return x


cdef inline double gamma_variate(uint64_t key, uint64_t step, uint64_t* sub,
                                 double d, double c, Zig* z) noexcept nogil:
    cdef double x, v, u
    while True:
        x = normal(key, step, sub, z)
        v = (1.0 + c * x) * (1.0 + c * x) * (1.0 + c * x)
        if v <= 0:
            continue
        u = u01(word(key, step, sub))
        if u < 1.0 - 0.0331 * x * x * x * x:
            return d * v
        if log(u) < 0.5 * x * x + d * (1.0 - v + log(v)):
            return d * v


def path_key(uint64_t seed, uint64_t path_id):
    return mix64(seed ^ mix64(path_id + GOLDEN))


def simulate_extremes(uint64_t seed, int64_t first_path, int64_t n_paths,
                      int64_t n_steps, double[::1] drifts, int student, double nu,
                      const double[::1] zig_x, const double[::1] zig_ratio, double zig_r):
    """Normalized (high, low, close) for each path and drift.

    ``drifts`` are per-step drifts in raw units (gamma / sqrt(N)).
    Returns an array of shape ``(n_paths, len(drifts), 3)``.
    """
    cdef Py_ssize_t G = drifts.shape[0]
    out = np.empty((n_paths, G, 3), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef double* hi = <double*>malloc(G * sizeof(double))
    cdef double* lo = <double*>malloc(G * sizeof(double))
    if hi == NULL or lo == NULL:
        free(hi)
        free(lo)
        raise MemoryError()
    cdef Zig z
    z.x = &zig_x[0]
    z.ratio = &zig_ratio[0]
    z.r = zig_r
    cdef double scale = 1.0 / sqrt(<double>n_steps)
    cdef double gd = 0.5 * nu - 1.0 / 3.0
    cdef double gc = 1.0 / sqrt(9.0 * gd) if student else 0.0
    cdef Py_ssize_t p, g
    cdef int64_t k
    cdef uint64_t key, sub
    cdef double s, e, y, chi2
    try:
        with nogil:
            for p in range(n_paths):
                key = mix64(seed ^ mix64(<uint64_t>(first_path + p) + GOLDEN))
                s = 0.0
                for g in range(G):
                    hi[g] = 0.0
                    lo[g] = 0.0
                for k in range(1, n_steps + 1):
                    sub = 0
                    e = normal(key, <uint64_t>k, &sub, &z)
                    if student:
                        chi2 = 2.0 * gamma_variate(key, <uint64_t>k, &sub, gd, gc, &z)
                        e = e * sqrt((nu - 2.0) / chi2)
                    s += e
                    for g in range(G):
                        y = s + drifts[g] * <double>k
                        if y > hi[g]:
                            hi[g] = y
                        elif y < lo[g]:
                            lo[g] = y
                for g in range(G):
                    o[p, g, 0] = hi[g] * scale
                    o[p, g, 1] = lo[g] * scale
                    o[p, g, 2] = (s + drifts[g] * <double>n_steps) * scale
    finally:
        free(hi)
        free(lo)
    return out
