"""Fixed-population walker engine: selection by potential, mutation by kernel.

Given walkers ``xi_n`` the selection step keeps walker ``i`` with probability
``eps * G(xi_i)`` and otherwise replaces it by walker ``j`` drawn with
probability proportional to ``G(xi_j)``. The policy fixes ``eps``:

``proportional``
    ``eps = 0``; every walker is redrawn (multinomial reconfiguration).
``unit``
    ``eps = 1``; requires ``G <= 1`` (geometric killing clock).
``essential_sup``
    ``eps = 1 / max_i G(xi_i)``; the fittest walker always survives.

Potentials are handled in log space so walkers far out in an absorbing well
do not underflow to a zero total weight.
"""
import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, ExtinctionError, NumericalError, PropagationError
from .linalg import factor_psd
from .rng import LANE_MUTATION, LANE_SELECTION, CounterRNG, derive_seed

POLICIES = ("proportional", "unit", "essential_sup")


@dataclass(frozen=True)
class FKModel:
    """Potential, kernel and initial law driving the walkers.

    ``log_potential`` maps an ``(N, d)`` array to ``log G`` of shape ``(N,)``.
    ``kernel(x, stream)`` and ``initial(stream)`` draw from a
    :class:`~fkdmc.rng.WalkerStream` so that each walker owns its randomness.
    """

    dim: int
    log_potential: Callable
    kernel: Callable
    initial: Callable
    g_max: float = np.inf
    delta: float = None

    def potential(self, x):
        return np.exp(self.log_potential(x))


def from_potential(dim, potential, kernel, initial, g_max=np.inf, delta=None):
    """Wrap a potential given in linear scale."""
    def log_potential(x):
        with np.errstate(divide="ignore"):
            return np.log(potential(x))
    return FKModel(dim, log_potential, kernel, initial, g_max, delta)


def gaussian_sampler(mean, cov):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    L = factor_psd(np.atleast_2d(cov))

    def initial(stream):
        return mean + stream.normal(mean.size) @ L.T
    return initial


def linear_gaussian_fk(A, B, S, initial, delta=None):
    """Kernel ``N(Ax, B)`` with potential ``exp(-x'Sx/2)``; ``S`` may be singular."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    L = factor_psd(np.atleast_2d(np.asarray(B, dtype=float)))
    d = A.shape[0]

    def log_potential(x):
        return -0.5 * np.einsum("ni,ni->n", x @ S, x)

    def kernel(x, stream):
        return x @ A.T + stream.normal(d) @ L.T

    return FKModel(d, log_potential, kernel, initial, 1.0, delta)


def gaussian_fk_model(model, eta0):
    """Engine view of a :class:`~fkdmc.gaussian.GaussianModel` started at ``eta0``."""
    return linear_gaussian_fk(model.A, model.B, model.S, gaussian_sampler(eta0.m, eta0.Omega),
                              model.delta)


def point_mass(x0):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    def initial(stream):
        return np.tile(x0, (stream.n, 1))
    return initial


@dataclass(frozen=True)
class WalkerEnsemble:
    step: int
    positions: np.ndarray
    seed: int

    @property
    def N(self):
        return self.positions.shape[0]


def init_ensemble(model, N, seed, rng=None):
    if N < 2:
        raise ConfigError("need at least two walkers", field="N")
    rng = rng or CounterRNG(seed)
    x = np.asarray(model.initial(rng.stream(0, LANE_MUTATION, N)), dtype=float).reshape(N, model.dim)
    _check_finite(x, 0)
    return WalkerEnsemble(0, x, rng.seed)


def _check_finite(x, step):
    bad = ~np.all(np.isfinite(x), axis=1)
    if bad.any():
        raise PropagationError(step, int(np.flatnonzero(bad)[0]))


def select_indices(log_g, policy, rng, step, g_max=None):
    """Ancestor index of every walker after one selection step.

    ``g_max`` is the declared bound of the potential; the unit policy needs it
    to be at most 1 and, when it is not given, checks the sampled values.
    """
    log_g = np.asarray(log_g, dtype=float)
    if np.isnan(log_g).any() or (log_g == np.inf).any():
        raise NumericalError(f"invalid potential value at step {step}")
    top = log_g.max()
    if top == -np.inf:
        raise ExtinctionError(step)
    w = np.exp(log_g - top)
    if policy == "proportional":
        survive = np.zeros_like(w)
    elif policy == "unit":
        if (g_max is not None and g_max > 1.0) or top > 1e-12:
            raise ConfigError("unit policy needs a potential bounded by 1", field="policy")
        survive = np.exp(log_g)
    elif policy == "essential_sup":
        survive = w
    else:
        raise ConfigError(f"unknown policy {policy!r}", field="policy")
    u = rng.uniforms(step, LANE_SELECTION, len(w))
    return rng.resample(np.cumsum(w), survive, u[:, 0], u[:, 1])


def selection_step(ensemble, log_g, policy, rng, g_max=None):
    idx = select_indices(log_g, policy, rng, ensemble.step, g_max)
    return replace(ensemble, positions=ensemble.positions[idx])


def mutation_step(ensemble, kernel, rng):
    step = ensemble.step + 1
    stream = rng.stream(step, LANE_MUTATION, ensemble.N)
    y = np.asarray(kernel(ensemble.positions, stream), dtype=float).reshape(ensemble.positions.shape)
    _check_finite(y, step)
    return replace(ensemble, step=step, positions=y)


@dataclass
class EstimatorSeries:
    """Per-step observables of the walker system, step 0 included.

    ``eta_G[n]`` is the empirical mean of the potential (the energy
    estimator); ``psi[name][n]`` is the potential-weighted mean of a
    registered test function and ``eta[name][n]`` its plain mean.
    """

    N: int
    seed: int
    policy: str
    delta: float = None
    steps: list = field(default_factory=list)
    means: list = field(default_factory=list)
    eta_G: list = field(default_factory=list)
    eta: dict = field(default_factory=dict)
    psi: dict = field(default_factory=dict)
    wall_clock: list = field(default_factory=list)
    rng_offsets: list = field(default_factory=list)

    def record(self, step, x, log_g, observables, t):
        w = np.exp(log_g - log_g.max()) if np.isfinite(log_g.max()) else np.ones_like(log_g)
        self.steps.append(step)
        self.means.append(x.mean(axis=0))
        self.eta_G.append(float(np.exp(log_g).mean()))
        for name, f in observables.items():
            v = np.asarray(f(x), dtype=float)
            self.eta.setdefault(name, []).append(float(v.mean()))
            self.psi.setdefault(name, []).append(float(w @ v / w.sum()))
        self.wall_clock.append(t)
        self.rng_offsets.append((step, step + 1))

    def mean_array(self):
        return np.asarray(self.means)

    def eta_G_array(self):
        return np.asarray(self.eta_G)

    def columns(self):
        d = len(self.means[0])
        cols = ["step"] + [f"mean_{i}" for i in range(d)] + ["eta_G"]
        for name in self.eta:
            cols += [f"eta_{name}", f"psi_{name}"]
        return cols

    def rows(self):
        for k, step in enumerate(self.steps):
            row = [step] + list(self.means[k]) + [self.eta_G[k]]
            for name in self.eta:
                row += [self.eta[name][k], self.psi[name][k]]
            yield row

    def to_csv(self, path, comment=None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for row in self.rows():
                w.writerow([r if isinstance(r, (int, np.integer)) else repr(float(r)) for r in row])


OBSERVABLES = {
    "norm2": lambda x: np.einsum("ni,ni->n", x, x),
    "x0": lambda x: x[:, 0],
}


def _resolve_observables(observables):
    if observables is None:
        return {}
    if isinstance(observables, dict):
        return observables
    try:
        return {name: OBSERVABLES[name] for name in observables}
    except KeyError as exc:
        raise ConfigError(f"unknown observable {exc.args[0]!r}", field="observables") from None


def run(model, N, n_steps, seed, policy="proportional", observables=None, threads=1,
        backend=None, rng=None):
    """Alternate selection and mutation for ``n_steps`` steps from a fresh ensemble."""
    if n_steps < 0:
        raise ConfigError("must be >= 0", field="n_steps")
    if policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}", field="policy")
    observables = _resolve_observables(observables)
    rng = rng or CounterRNG(seed, threads, backend)
    series = EstimatorSeries(N, rng.seed, policy, model.delta)
    t0 = time.perf_counter()
    ens = init_ensemble(model, N, seed, rng)
    for n in range(n_steps + 1):
        log_g = np.asarray(model.log_potential(ens.positions), dtype=float)
        series.record(n, ens.positions, log_g, observables, time.perf_counter() - t0)
        if n == n_steps:
            break
        ens = selection_step(ens, log_g, policy, rng, model.g_max)
        ens = mutation_step(ens, model.kernel, rng)
    return series


def run_replicates(model, N, n_steps, seed, reps, policy="proportional", observables=None,
                   threads=1, backend=None):
    """Independent runs with child seeds ``derive_seed(seed, r)``, in rep order."""
    seeds = [derive_seed(seed, r) for r in range(reps)]

    def job(s):
        return run(model, N, n_steps, s, policy, observables, 1, backend)

    if threads <= 1:
        return [job(s) for s in seeds]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(job, seeds))


@dataclass(frozen=True)
class EnergyEstimate:
    """Post burn-in mean of ``eta_n^N(G)``.

    ``stderr`` treats the retained steps as independent and so ignores
    autocorrelation; it understates the true error for slowly mixing chains.
    """

    value: float
    stderr: float
    burn_in: int
    n_samples: int
    energy: float = None
    energy_stderr: float = None

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("value", "stderr", "burn_in", "n_samples", "energy", "energy_stderr")}


def burn_in_steps(N, a=10.0, b=2.0):
    """First step index with ``n >= a + b log N``."""
    return int(np.ceil(a + b * np.log(N)))


def energy_estimate(series, N=None, burn_in=(10.0, 2.0)):
    N = N or series.N
    n0 = burn_in if isinstance(burn_in, (int, np.integer)) else burn_in_steps(N, *burn_in)
    g = series.eta_G_array()
    steps = np.asarray(series.steps)
    kept = g[steps >= n0]
    if kept.size == 0:
        raise ConfigError(f"burn-in {n0} exceeds series length {steps[-1]}", field="burn_in")
    value = float(kept.mean())
    se = float(kept.std(ddof=1) / np.sqrt(kept.size)) if kept.size > 1 else 0.0
    energy = energy_se = None
    if series.delta:
        energy = -np.log(value) / series.delta
        energy_se = se / (value * series.delta)
    return EnergyEstimate(value, se, n0, int(kept.size), energy, energy_se)
