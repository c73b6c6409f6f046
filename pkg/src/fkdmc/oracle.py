"""Brute-force grid discretization of the one-dimensional operator Q.

``Q(f)(x) = G(x) * int p(x, y) f(y) dy`` is replaced by the matrix
``Q[i, j] = G(x_i) p(x_i, x_j) w_j`` on a uniform trapezoid grid over
``[-L, L]``. Nothing here reuses the closed-form recursions; the grid is the
independent check on them.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConvergenceError, ExtinctionError
from .gaussian import _scalar_params, ground_state


@dataclass(frozen=True)
class GridOperator:
    L: float
    M: int
    nodes: np.ndarray
    weights: np.ndarray
    G: np.ndarray
    kernel: np.ndarray  # p(x_i, x_j), no quadrature weight
    params: tuple

    @property
    def Q_matrix(self):
        return self.G[:, None] * self.kernel * self.weights[None, :]

    def apply(self, f):
        """``Q(f)`` at the nodes for ``f`` given by its node values."""
        return self.G * (self.kernel @ (self.weights * f))

    def power(self, f, n):
        out = [np.asarray(f, dtype=float)]
        for _ in range(n):
            out.append(self.apply(out[-1]))
        return out

    def integrate(self, f):
        return float(self.weights @ f)


def default_half_width(model):
    _, B, _ = _scalar_params(model)
    P_inf = float(ground_state(model).P_inf[0, 0])
    return 8.0 * max(np.sqrt(B), np.sqrt(P_inf))


def build_grid(model, L=None, M=2001, unit_potential=False):
    A, B, S = _scalar_params(model)
    if L is None:
        L = default_half_width(model)
    if not L > 0:
        raise ConfigError("half-width must be positive", field="L")
    if M < 3 or M % 2 == 0:
        raise ConfigError("grid size must be odd and >= 3", field="M")
    x = np.linspace(-L, L, M)
    h = x[1] - x[0]
    w = np.full(M, h)
    w[0] = w[-1] = 0.5 * h
    G = np.ones(M) if unit_potential else np.exp(-0.5 * S * x * x)
    diff = x[None, :] - A * x[:, None]
    kernel = np.exp(-0.5 * diff * diff / B) / np.sqrt(2.0 * np.pi * B)
    return GridOperator(float(L), int(M), x, w, G, kernel, (A, B, S))


def power_iteration(op, tol=1e-12, window=10, max_iter=10_000):
    """Leading eigenvalue and unit right eigenvector of ``op.Q_matrix``."""
    Q = op.Q_matrix
    v = np.exp(-0.5 * op.nodes ** 2)
    v /= np.linalg.norm(v)
    history = []
    for it in range(max_iter):
        u = Q @ v
        lam = np.linalg.norm(u)
        v = u / lam
        history.append(lam)
        if len(history) > window and abs(history[-1] - history[-1 - window]) < tol:
            return float(lam), v
    drift = abs(history[-1] - history[-1 - window])
    raise ConvergenceError("power iteration", drift, max_iter)


def reversibility_defect(op):
    """Relative asymmetry of Q in ``L^2(pi/G)``, ``pi(x) ~ exp(-(1 - A^2) x^2 / 2B)``.

    In one dimension every Gaussian kernel satisfies detailed balance for
    this (possibly improper) ``pi``, so the defect is round-off.
    """
    A, B, _ = op.params
    log_nu = -0.5 * (1.0 - A * A) * op.nodes ** 2 / B + np.log(op.weights) - np.log(op.G)
    log_nu -= log_nu.max()
    half = 0.5 * log_nu
    T = np.exp(half[:, None] - half[None, :]) * op.Q_matrix
    return float(np.max(np.abs(T - T.T)) / np.max(np.abs(T)))


@dataclass(frozen=True)
class GridFlow:
    densities: list
    means: np.ndarray
    variances: np.ndarray


def _moments(op, rho):
    mass = op.integrate(rho)
    mean = op.integrate(op.nodes * rho) / mass
    var = op.integrate((op.nodes - mean) ** 2 * rho) / mass
    return mean, var


def grid_flow(op, eta0, n):
    """Normalized flow ``eta Q / eta Q(1)`` on densities sampled at the nodes."""
    rho = np.asarray(eta0, dtype=float)
    if np.any(rho < 0):
        raise ConfigError("initial density must be non-negative", field="eta0")
    mass = op.integrate(rho)
    if not mass > 0:
        raise ExtinctionError(0, "initial density has no mass on the grid")
    rho = rho / mass
    dens, means, variances = [rho], [], []
    K = op.G[:, None] * op.kernel
    for k in range(n + 1):
        m, v = _moments(op, dens[-1])
        means.append(m)
        variances.append(v)
        if k == n:
            break
        nxt = (op.weights * dens[-1]) @ K
        mass = op.integrate(nxt)
        if not mass > 1e-300:
            raise ExtinctionError(k + 1, "grid flow mass underflow")
        dens.append(nxt / mass)
    return GridFlow(dens, np.array(means), np.array(variances))


def grid_asymptotic_variance(op, eta0, n):
    """CLT variance of the mean estimator at step ``n`` by quadrature.

    Sums ``eta_p[(Q^{n-p}(I - eta_n(I)))^2] / (eta_p Q^{n-p}(1))^2`` over
    ``p = 0..n`` for an arbitrary initial density.
    """
    flow = grid_flow(op, eta0, n)
    f = op.nodes - flow.means[n]
    Qf = op.power(f, n)
    Q1 = op.power(np.ones(op.M), n)
    total = 0.0
    for p in range(n + 1):
        rho = flow.densities[p]
        j = n - p
        total += op.integrate(rho * Qf[j] ** 2) / op.integrate(rho * Q1[j]) ** 2
    return total
