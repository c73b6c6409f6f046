"""k-step importance transform of the linear-Gaussian model.

Grouping ``k`` steps of the semigroup gives ``Q_{0,k}(f) = G^(k) P^(k)(f)`` with
``G^(k) = Q_{0,k}(1)`` proportional to ``exp(-x'S_k x/2)`` and ``P^(k)`` the
Gaussian kernel ``N(A_k x, B_k)``. For ``k`` large enough the pair satisfies the
contraction condition ``A_k'S_kA_k < S_k`` even when ``(A, S)`` does not, so a
walker system driven by it has uniform-in-time error.
"""
from dataclasses import dataclass

import numpy as np

from .engine import gaussian_sampler, linear_gaussian_fk, run
from .errors import ConfigError, StableKNotFound
from .gaussian import (GaussianMeasure, exact_flow, hat_model, propagator_powers,
                       update)
from .linalg import min_eig, sym
from .rng import derive_seed


@dataclass(frozen=True)
class _Operators:
    A: np.ndarray
    B: np.ndarray
    S: np.ndarray

    @property
    def d(self):
        return self.A.shape[0]


@dataclass(frozen=True)
class KStepModel:
    """Walker model for steps ``0, k, 2k, ...`` of a base Gaussian model.

    With ``updated=False`` the powers come from ``(G_S, P_{A,B})`` and the
    walker flow tracks ``eta_{nk}`` from ``eta_0``. With ``updated=True`` they
    come from the updated pair ``(G_hat, P_hat)``, walkers start from
    ``psi_G(eta_0)`` and the flow tracks ``eta_hat_{nk}``.
    """

    k: int
    base: object
    powers: object
    updated: bool = False

    @property
    def d(self):
        return self.base.d

    @property
    def operators(self):
        return _Operators(self.powers.A_k, self.powers.B_k, self.powers.S_k)

    @property
    def delta(self):
        return None if self.base.delta is None else self.k * self.base.delta

    def log_potential(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        return -0.5 * np.einsum("ni,ni->n", x @ self.powers.S_k, x)

    def normalized_potential(self, x):
        """``G^(k)`` scaled to 1 at the origin."""
        return np.exp(self.log_potential(x))

    def start(self, eta0):
        return update(eta0, self.base.S) if self.updated else eta0

    def fk_model(self, eta0):
        eta = self.start(eta0)
        ops = self.operators
        return linear_gaussian_fk(ops.A, ops.B, ops.S, gaussian_sampler(eta.m, eta.Omega),
                                  self.delta)

    def exact_flow(self, eta0, n):
        """Gaussian flow of the k-step model itself, ``n`` grouped steps."""
        return exact_flow(self.operators, self.start(eta0), n)

    def reference_flow(self, eta0, n):
        """The base-model measures the k-step flow should reproduce at steps ``0..n``."""
        flow = exact_flow(self.base, eta0, n * self.k)
        if self.updated:
            flow = [update(eta, self.base.S) for eta in flow]
        return flow[:: self.k]


def build_k_step(model, k, updated=False):
    if k < 1:
        raise ConfigError("k must be >= 1", field="k")
    source = hat_model(model) if updated else model
    return KStepModel(int(k), model, propagator_powers(source, k), updated)


def stability_margin(powers):
    """Smallest eigenvalue of ``S_k - A_k'S_kA_k``; positive means contracting."""
    A, S = powers.A_k, powers.S_k
    return min_eig(sym(S - A.T @ S @ A))


def min_stable_k(model, k_max=100, updated=False):
    """Smallest ``k <= k_max`` whose powers satisfy ``A_k'S_kA_k < S_k``."""
    if k_max < 1:
        raise ConfigError("k_max must be >= 1", field="k_max")
    source = hat_model(model) if updated else model
    margins = []
    for k in range(1, k_max + 1):
        margin = stability_margin(propagator_powers(source, k))
        if margin > 1e-12:
            return k
        margins.append(margin)
    raise StableKNotFound(k_max, margins)


@dataclass
class KStepRun:
    """Walker estimates of the first moment on the base time axis."""

    k: int
    steps: np.ndarray
    means: np.ndarray
    reference: np.ndarray

    @property
    def errors(self):
        return np.linalg.norm(self.means - self.reference, axis=1)


def run_k_step(kmodel, eta0, N, n_steps, seed, policy="proportional", fill_gaps=False,
               threads=1, backend=None):
    """Run the k-step walkers for ``n_steps`` grouped steps.

    With ``fill_gaps`` an independent system is started at every offset
    ``r < k`` from the exact base law at step ``r`` (``psi_G`` applied when
    ``updated``), so every base step up to ``n_steps * k`` gets an estimate.
    Offset ``r`` uses the child seed ``derive_seed(seed, r)``; offset 0 uses
    ``seed`` itself.
    """
    offsets = range(kmodel.k) if fill_gaps else [0]
    base_flow = exact_flow(kmodel.base, eta0, n_steps * kmodel.k + kmodel.k)
    steps, means, refs = [], [], []
    for r in offsets:
        start = base_flow[r]
        series = run(kmodel.fk_model(start), N, n_steps, seed if r == 0 else derive_seed(seed, r),
                     policy, threads=threads, backend=backend)
        ref = kmodel.reference_flow(start, n_steps)
        steps.append(r + kmodel.k * np.arange(n_steps + 1))
        means.append(series.mean_array())
        refs.append(np.array([eta.m for eta in ref]))
    steps = np.concatenate(steps)
    order = np.argsort(steps, kind="stable")
    return KStepRun(kmodel.k, steps[order], np.concatenate(means)[order],
                    np.concatenate(refs)[order])
