"""Numpy implementation of the path-extremes kernel.

Produces the same stream and the same reduction order as the compiled
kernel, one block of paths at a time.
"""
from __future__ import annotations

import numpy as np

from . import _rng

# elements per block (paths * steps)
_BLOCK = 1 << 20


def simulate_extremes(seed, first_path, n_paths, n_steps, drifts, student, nu):
    """Normalized (high, low, close), shape ``(n_paths, len(drifts), 3)``."""
    drifts = np.asarray(drifts, dtype=np.float64)
    out = np.empty((n_paths, drifts.size, 3))
    scale = 1.0 / np.sqrt(float(n_steps))
    per_block = max(1, _BLOCK // n_steps)
    steps = np.arange(1, n_steps + 1, dtype=np.uint64)
    kf = steps.astype(np.float64)
    for start in range(0, n_paths, per_block):
        b = min(per_block, n_paths - start)
        keys = _rng.path_keys(seed, np.arange(first_path + start, first_path + start + b))
        key = np.repeat(keys, n_steps)
        step = np.tile(steps, b)
        sub = np.zeros(key.size, dtype=np.uint64)
        if student:
            eps = _rng.student_innovations(key, step, sub, nu)
        else:
            eps = _rng.normals(key, step, sub)
        s = np.cumsum(eps.reshape(b, n_steps), axis=1)
        for g, d in enumerate(drifts):
            y = s + d * kf
            out[start : start + b, g, 0] = np.maximum(y.max(axis=1), 0.0) * scale
            out[start : start + b, g, 1] = np.minimum(y.min(axis=1), 0.0) * scale
            out[start : start + b, g, 2] = y[:, -1] * scale
    return out


def path_key(seed, path_id):
    return _rng.path_key_int(seed, path_id)
