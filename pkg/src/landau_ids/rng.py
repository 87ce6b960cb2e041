"""Vectorized Philox4x64-10, so each coupling is a pure function of (seed, counter).

Bit-compatible with numpy.random.Philox: numpy increments the counter before
each block, so Philox(key=k, counter=c) emits philox4x64(c + 1, k).
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO = np.uint64(0xFFFFFFFF)
_32 = np.uint64(32)


def _mulhilo(a: np.ndarray, m: np.uint64) -> tuple[np.ndarray, np.ndarray]:
    al, ah = a & _LO, a >> _32
    ml, mh = m & _LO, m >> _32
    ll = al * ml
    lh = al * mh
    hl = ah * ml
    mid = (ll >> _32) + (lh & _LO) + (hl & _LO)
    hi = ah * mh + (lh >> _32) + (hl >> _32) + (mid >> _32)
    return hi, a * m


def philox4x64(counter, key) -> tuple[np.ndarray, ...]:
    """Ten Philox rounds on broadcastable uint64 counter words c0..c3 and a 2-word key."""
    c0, c1, c2, c3 = np.broadcast_arrays(*[np.asarray(c, dtype=np.uint64) for c in counter])
    k0 = np.uint64(key[0])
    k1 = np.uint64(key[1])
    with np.errstate(over="ignore"):
        for r in range(10):
            if r:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(c0, _M0)
            hi1, lo1 = _mulhilo(c2, _M1)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def to_unit(bits: np.ndarray) -> np.ndarray:
    """Map 64 random bits to the open interval (0, 1) with 53-bit resolution."""
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _word(v) -> np.ndarray:
    # signed lattice coordinates wrap into uint64 two's complement
    return np.asarray(v, dtype=np.int64).astype(np.uint64)


def site_uniforms(seed: int, realization, g1, g2, stream: int = 0) -> np.ndarray:
    """Uniforms keyed by (seed; realization, g1, g2, stream), broadcasting over arrays."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    out = philox4x64(
        (_word(realization), _word(g1), _word(g2), np.uint64(stream)),
        (seed, 0),
    )
    return to_unit(out[0])
