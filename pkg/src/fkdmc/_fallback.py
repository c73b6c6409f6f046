"""Pure numpy versions of the hot kernels.

Same signatures and bit-identical output as the compiled ``_kernels`` module.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53


def philox4x32(c0, c1, c2, c3, k0, k1, rounds=10):
    """Vectorized Philox4x32 block function on uint64 arrays holding 32-bit words."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    k0 &= 0xFFFFFFFF
    k1 &= 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _S32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK,
            (p0 >> _S32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK,
        )
    return c0, c1, c2, c3


def _fill(out, seed, step, lane, start, block0):
    n, width = out.shape
    walkers = np.arange(start, start + n, dtype=np.uint64)
    k0, k1 = seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF
    c1 = np.full(n, step, dtype=np.uint64)
    c2 = np.full(n, lane, dtype=np.uint64)
    for b in range(width // 2):
        c3 = np.full(n, block0 + b, dtype=np.uint64)
        x0, x1, x2, x3 = philox4x32(walkers, c1, c2, c3, k0, k1)
        out[:, 2 * b] = (((x0 << _S32) | x1) >> _S11).astype(np.float64) * _TWO_M53
        out[:, 2 * b + 1] = (((x2 << _S32) | x3) >> _S11).astype(np.float64) * _TWO_M53


def uniforms(seed, step, lane, start, n, nblocks, block0, threads):
    out = np.empty((n, 2 * nblocks), dtype=np.float64)
    if threads <= 1 or n < 2 * threads:
        _fill(out, seed, step, lane, start, block0)
        return out
    bounds = np.linspace(0, n, threads + 1).astype(int)
    with ThreadPoolExecutor(threads) as pool:
        list(pool.map(
            lambda ab: _fill(out[ab[0]:ab[1]], seed, step, lane, start + ab[0], block0),
            zip(bounds[:-1], bounds[1:]),
        ))
    return out


def resample(cumw, survive, u_keep, u_pick, threads):
    total = cumw[-1]
    picks = np.searchsorted(cumw, u_pick * total, side="right")
    np.minimum(picks, len(cumw) - 1, out=picks)
    keep = u_keep < survive
    return np.where(keep, np.arange(len(survive)), picks).astype(np.int64)
