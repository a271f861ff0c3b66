"""Counter-based random stream shared by the compiled and numpy backends.

Every 64-bit word is a pure function of ``(seed, path_id, step, sub)``:

    key  = mix64(seed ^ mix64(path_id + GOLDEN))
    word = mix64(key + ((step << 16) | sub) * GOLDEN)

where ``mix64`` is the splitmix64 finalizer and ``sub`` counts the words
consumed within one step. Uniforms use the top 53 bits, offset by half an
ulp so they never hit 0 or 1. Normals come from a 256-layer ziggurat
(Marsaglia and Tsang layout, Doornik's variant of the acceptance test).
Gamma variates for Student-t innovations use Marsaglia and Tsang's
squeeze method on the same stream.
"""
from __future__ import annotations

import math

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
SUB_BITS = 16
_MASK64 = (1 << 64) - 1

ZIG_LAYERS = 256
ZIG_R = 3.6541528853610088
ZIG_V = 0.00492867323399

_U64 = np.uint64
_G = _U64(GOLDEN)
_M1 = _U64(MIX1)
_M2 = _U64(MIX2)
_S30, _S27, _S31, _S11 = _U64(30), _U64(27), _U64(31), _U64(11)
_INV53 = 2.0**-53


def zig_tables():
    """Layer edges ``x`` (257 values, decreasing to 0) and ratios ``x[i+1]/x[i]``."""
    x = np.zeros(ZIG_LAYERS + 1)
    f = math.exp(-0.5 * ZIG_R * ZIG_R)
    x[0] = ZIG_V / f
    x[1] = ZIG_R
    for i in range(2, ZIG_LAYERS):
        x[i] = math.sqrt(-2.0 * math.log(ZIG_V / x[i - 1] + f))
        f = math.exp(-0.5 * x[i] * x[i])
    x[ZIG_LAYERS] = 0.0
    ratio = x[1:] / x[:-1]
    return x, ratio


ZIG_X, ZIG_RATIO = zig_tables()


def mix64_int(z):
    """splitmix64 finalizer on a Python int."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * MIX2) & _MASK64
    return z ^ (z >> 31)


def path_key_int(seed, path_id):
    """Stream key for one path."""
    return mix64_int((seed & _MASK64) ^ mix64_int(path_id + GOLDEN))


def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def path_keys(seed, path_ids):
    """Vectorized :func:`path_key_int`."""
    ids = np.asarray(path_ids, dtype=np.uint64)
    return _mix64(_U64(seed & _MASK64) ^ _mix64(ids + _G))


def words(key, step, sub):
    """Stream words for equally shaped uint64 arrays."""
    ctr = (step << _U64(SUB_BITS)) | sub
    return _mix64(key + ctr * _G)


def u01(w):
    """Uniform in (0, 1) from the top 53 bits of each word."""
    return ((w >> _S11).astype(np.float64) + 0.5) * _INV53


def _normal_tail(key, step, sub, negative):
    """Marsaglia tail beyond ``ZIG_R``; returns values and advanced counters."""
    sub = sub.copy()
    n = key.size
    out = np.empty(n)
    pending = np.arange(n)
    while pending.size:
        k, s = key[pending], step[pending]
        x = np.log(u01(words(k, s, sub[pending]))) / ZIG_R
        sub[pending] += _U64(1)
        y = np.log(u01(words(k, s, sub[pending])))
        sub[pending] += _U64(1)
        ok = -2.0 * y >= x * x
        idx = pending[ok]
        out[idx] = np.where(negative[idx], x[ok] - ZIG_R, ZIG_R - x[ok])
        pending = pending[~ok]
    return out, sub


def normals(key, step, sub):
    """Standard normals, one per element; ``sub`` is advanced in place."""
    n = key.size
    out = np.empty(n)
    pending = np.arange(n)
    while pending.size:
        k, s = key[pending], step[pending]
        w = words(k, s, sub[pending])
        sub[pending] += _U64(1)
        layer = (w & _U64(0xFF)).astype(np.intp)
        u = 2.0 * u01(w) - 1.0
        x = u * ZIG_X[layer]
        inside = np.abs(u) < ZIG_RATIO[layer]
        done = inside.copy()
        out[pending[inside]] = x[inside]

        tail = ~inside & (layer == 0)
        if tail.any():
            ti = pending[tail]
            out[ti], sub[ti] = _normal_tail(key[ti], step[ti], sub[ti], u[tail] < 0)
            done |= tail

        wedge = ~inside & (layer != 0)
        if wedge.any():
            wi = pending[wedge]
            lw = layer[wedge]
            xw = x[wedge]
            w2 = words(key[wi], step[wi], sub[wi])
            sub[wi] += _U64(1)
            xi2 = ZIG_X[lw] * ZIG_X[lw]
            xj2 = ZIG_X[lw + 1] * ZIG_X[lw + 1]
            f0 = np.exp(-0.5 * (xi2 - xw * xw))
            f1 = np.exp(-0.5 * (xj2 - xw * xw))
            acc = f1 + (f0 - f1) * u01(w2) < 1.0
            out[wi[acc]] = xw[acc]
            done[np.nonzero(wedge)[0][acc]] = True
        pending = pending[~done]
    return out


def gammas(key, step, sub, shape):
    """Gamma(shape, 1) variates for ``shape >= 1``; ``sub`` advanced in place."""
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    n = key.size
    out = np.empty(n)
    pending = np.arange(n)
    while pending.size:
        sb = sub[pending]
        x = normals(key[pending], step[pending], sb)
        v = (1.0 + c * x) * (1.0 + c * x) * (1.0 + c * x)
        pos = v > 0
        # u is drawn only when v > 0, mirroring the scalar loop
        u = np.full(pending.size, 0.5)
        pi = np.nonzero(pos)[0]
        u[pi] = u01(words(key[pending[pi]], step[pending[pi]], sb[pi]))
        sb[pi] += _U64(1)
        sub[pending] = sb
        with np.errstate(divide="ignore", invalid="ignore"):
            logv = np.log(np.where(pos, v, 1.0))
            squeeze = u < 1.0 - 0.0331 * x * x * x * x
            full = np.log(u) < 0.5 * x * x + d * (1.0 - v + logv)
        ok = pos & (squeeze | full)
        out[pending[ok]] = d * v[ok]
        pending = pending[~ok]
    return out


def student_innovations(key, step, sub, nu):
    """Unit-variance Student-t variates with ``nu > 2`` degrees of freedom."""
    z = normals(key, step, sub)
    chi2 = 2.0 * gammas(key, step, sub, 0.5 * nu)
    return z * np.sqrt((nu - 2.0) / chi2)
