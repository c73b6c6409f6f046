"""Counter-based random streams keyed by (seed, step, walker, lane).

Every draw is a pure function of its key, so the order in which walkers are
processed, and the number of threads processing them, cannot change a result.
The Philox4x32-10 block function runs in the compiled ``_kernels`` module when
it is importable and in :mod:`fkdmc._fallback` otherwise; set
``FKDMC_BACKEND=python`` to force the fallback.
"""
import os

import numpy as np

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

LANE_MUTATION = 0
LANE_SELECTION = 1

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled


def available_backends():
    return sorted(_BACKENDS)


def _default_backend():
    wanted = os.environ.get("FKDMC_BACKEND", "").strip().lower()
    if wanted:
        if wanted not in _BACKENDS:
            raise ImportError(f"FKDMC_BACKEND={wanted!r} unavailable; have {available_backends()}")
        return wanted
    return "cython" if "cython" in _BACKENDS else "python"


BACKEND = _default_backend()


def get_backend(name=None):
    return _BACKENDS[name or BACKEND]


def derive_seed(seed, *path):
    """Independent 64-bit child seed for replicate ``path`` of a master seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class CounterRNG:
    """Factory of per-walker substreams.

    Parameters
    ----------
    seed : int
        64-bit master seed, used as the Philox key.
    threads : int
        Worker threads for the kernels; never changes the output.
    backend : {"cython", "python"}, optional
    """

    def __init__(self, seed, threads=1, backend=None):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.threads = max(1, int(threads))
        self.backend = backend or BACKEND
        self._impl = get_backend(self.backend)

    def uniforms(self, step, lane, n, nblocks=1, block0=0, start=0):
        """``(n, 2*nblocks)`` uniforms on [0, 1) for walkers ``start..start+n-1``."""
        return self._impl.uniforms(self.seed, int(step), int(lane), int(start), int(n),
                                   int(nblocks), int(block0), self.threads)

    def stream(self, step, lane, n):
        return WalkerStream(self, step, lane, n)

    def resample(self, cumw, survive, u_keep, u_pick):
        return self._impl.resample(
            np.ascontiguousarray(cumw, dtype=float),
            np.ascontiguousarray(survive, dtype=float),
            np.ascontiguousarray(u_keep, dtype=float),
            np.ascontiguousarray(u_pick, dtype=float),
            self.threads,
        )


class WalkerStream:
    """Draws for all ``n`` walkers at one (step, lane); successive calls use fresh blocks."""

    def __init__(self, rng, step, lane, n):
        self.rng = rng
        self.step = step
        self.lane = lane
        self.n = n
        self._block = 0

    def uniform(self, k=1):
        nblocks = (k + 1) // 2
        u = self.rng.uniforms(self.step, self.lane, self.n, nblocks, self._block)
        self._block += nblocks
        return u[:, :k]

    def normal(self, k=1):
        """Standard normals by Box-Muller, one block per pair of coordinates."""
        nblocks = (k + 1) // 2
        u = self.rng.uniforms(self.step, self.lane, self.n, nblocks, self._block)
        self._block += nblocks
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0::2]))
        theta = 2.0 * np.pi * u[:, 1::2]
        z = np.empty((self.n, 2 * nblocks))
        z[:, 0::2] = r * np.cos(theta)
        z[:, 1::2] = r * np.sin(theta)
        return z[:, :k]

    @property
    def offset(self):
        return self._block
