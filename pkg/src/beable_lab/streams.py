"""Counter-based random streams.

Every stochastic run draws its k-th uniform as a pure function of
(master seed, run index, k).  Ensembles can therefore be evaluated in one
vectorized pass, split across workers, or replayed one run at a time, and
all of these produce bit-identical samples.

Scheme (stable across versions)::

    key    = mix(seed * G1 + 0x243F6A8885A308D3)
    stream = mix(key ^ ((run + 1) * G2))
    u[k]   = (mix(stream + (k + 1) * G1) >> 11) * 2**-53

where ``mix`` is the SplitMix64 finalizer and G1, G2 are odd 64-bit
constants.  Within a stream this is SplitMix64 itself.
"""
from __future__ import annotations

import numpy as np

_G1 = np.uint64(0x9E3779B97F4A7C15)
_G2 = np.uint64(0xD1B54A32D192ED03)
_OFFSET = np.uint64(0x243F6A8885A308D3)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _key(seed: int) -> np.ndarray:
    s = np.array([int(seed) % (1 << 64)], dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(s * _G1 + _OFFSET)[0]


def uniforms(seed: int, runs, draw) -> np.ndarray:
    """Uniform variates in [0, 1) for each (run, draw) pair (broadcast)."""
    runs = np.asarray(runs, dtype=np.uint64)
    draw = np.asarray(draw, dtype=np.uint64)
    with np.errstate(over="ignore"):
        stream = _mix(_key(seed) ^ ((runs + np.uint64(1)) * _G2))
        z = _mix(stream + (draw + np.uint64(1)) * _G1)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def exponentials(seed: int, runs, draw) -> np.ndarray:
    """Exp(1) variates by inversion of the matching uniforms."""
    return -np.log1p(-uniforms(seed, runs, draw))


def categorical(u: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling, categories in ascending order.

    ``probs`` has shape (m, k) (rows need not be normalized); ``u`` has shape (m,).
    """
    probs = np.asarray(probs, dtype=float)
    cdf = np.cumsum(probs, axis=-1)
    target = u * cdf[..., -1]
    idx = (cdf <= target[..., None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)
