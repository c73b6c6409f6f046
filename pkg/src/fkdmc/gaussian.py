"""Exact solution of the linear-Gaussian Feynman-Kac model.

The model is the triple ``(A, B, S)``: mutation kernel ``P(x, .) = N(Ax, B)``
and potential ``G(x) = exp(-x'Sx/2)``. Gaussian measures stay Gaussian under
both the Boltzmann-Gibbs update and the kernel, so every quantity the walker
engine estimates has a closed form here.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, ConvergenceError, NonIntegrableError
from .linalg import inv_sqrtm_pd, is_pd, is_psd, min_eig, solve_checked, sym


def _as_matrix(M, d, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (d, d):
        raise ConfigError(f"expected shape {(d, d)}, got {M.shape}", field=name)
    if not np.all(np.isfinite(M)):
        raise ConfigError("non-finite entry", field=name)
    return M


@dataclass(frozen=True)
class GaussianModel:
    """Kernel ``N(Ax, B)`` and potential ``exp(-x'Sx/2)`` on R^d.

    ``delta`` is the time step when the model discretizes a continuous-time
    Hamiltonian; it is only used to convert eigenvalues into energies.
    """

    A: np.ndarray
    B: np.ndarray
    S: np.ndarray
    delta: float = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        d = A.shape[0]
        object.__setattr__(self, "A", _as_matrix(A, d, "A"))
        object.__setattr__(self, "B", _as_matrix(self.B, d, "B"))
        object.__setattr__(self, "S", _as_matrix(self.S, d, "S"))
        if not is_pd(self.B):
            raise ConfigError("must be symmetric positive definite", field="B")
        if not is_pd(self.S):
            raise ConfigError("must be symmetric positive definite", field="S")
        if self.delta is not None and not self.delta > 0:
            raise ConfigError("must be positive", field="delta")

    @property
    def d(self):
        return self.A.shape[0]

    @classmethod
    def scalar(cls, A, B, S, delta=None):
        return cls([[A]], [[B]], [[S]], delta)

    def is_reversible(self, tol=1e-12):
        """Whether ``P_{A,B}`` satisfies ``AB = BA'``."""
        return np.allclose(self.A @ self.B, self.B @ self.A.T, atol=tol)

    def to_dict(self):
        out = {"dimension": self.d, "A": self.A.tolist(), "B": self.B.tolist(), "S": self.S.tolist()}
        if self.delta is not None:
            out["delta"] = self.delta
        return out

    @classmethod
    def from_dict(cls, doc):
        try:
            d = int(doc["dimension"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("missing or non-integer", field="dimension") from exc
        if d < 1:
            raise ConfigError("must be >= 1", field="dimension")
        mats = {}
        for name in ("A", "B", "S"):
            if name not in doc:
                raise ConfigError("missing matrix", field=name)
            try:
                mats[name] = np.array(doc[name], dtype=float).reshape(d, d)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"not a {d}x{d} row-major decimal matrix", field=name) from exc
        return cls(mats["A"], mats["B"], mats["S"], doc.get("delta"))

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(doc)


@dataclass(frozen=True)
class GaussianMeasure:
    m: np.ndarray
    Omega: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "Omega", _as_matrix(self.Omega, m.size, "Omega"))
        if not is_psd(self.Omega):
            raise ConfigError("covariance must be symmetric PSD", field="Omega")

    @property
    def d(self):
        return self.m.size

    @classmethod
    def scalar(cls, m, var):
        return cls([m], [[var]])

    def density(self, x):
        """Density at points ``x`` of shape (n, d) or (n,) for d = 1."""
        x = np.asarray(x, dtype=float).reshape(-1, self.d) - self.m
        P = np.linalg.inv(self.Omega)
        _, logdet = np.linalg.slogdet(2 * np.pi * self.Omega)
        return np.exp(-0.5 * np.einsum("ni,ij,nj->n", x, P, x) - 0.5 * logdet)


def update(eta, S):
    """Boltzmann-Gibbs update of ``N(m, Omega)`` by ``exp(-x'Sx/2)``."""
    I = np.eye(eta.d)
    K = solve_checked(I + eta.Omega @ S, I)
    return GaussianMeasure(K @ eta.m, sym(K @ eta.Omega))


def push(eta, A, B):
    """Law of ``AX + W`` for ``X ~ eta`` and ``W ~ N(0, B)``."""
    return GaussianMeasure(A @ eta.m, sym(A @ eta.Omega @ A.T + B))


def potential_expectation(eta, S):
    """``eta(G_S)`` in closed form."""
    I = np.eye(eta.d)
    M = I + eta.Omega @ S
    _, logdet = np.linalg.slogdet(M)
    quad = eta.m @ S @ solve_checked(M, eta.m)
    return float(np.exp(-0.5 * logdet - 0.5 * quad))


def e_map(Omega, model):
    """``A (I + Omega S)^-1``."""
    Omega = np.atleast_2d(Omega)
    I = np.eye(model.d)
    return solve_checked((I + Omega @ model.S).T, model.A.T).T


def phi_map(Omega, model):
    """Kalman covariance map ``A (I + Omega S)^-1 Omega A' + B``."""
    Omega = np.atleast_2d(Omega)
    return sym(e_map(Omega, model) @ Omega @ model.A.T + model.B)


def exact_flow(model, eta0, n):
    """``[eta_0, ..., eta_n]`` under ``eta_{k+1} = psi_G(eta_k) P``."""
    out = [eta0]
    m, Omega = eta0.m, eta0.Omega
    for _ in range(n):
        m, Omega = e_map(Omega, model) @ m, phi_map(Omega, model)
        out.append(GaussianMeasure(m, Omega))
    return out


def riccati_map(X, model):
    """``A'(XB + I)^-1 X A + S``: one backward application of Q to exp(-x'Xx/2)."""
    I = np.eye(model.d)
    return sym(model.A.T @ solve_checked(X @ model.B + I, X) @ model.A + model.S)


@dataclass(frozen=True)
class GroundStateTriple:
    S_inf: np.ndarray
    E0: float
    P_inf: np.ndarray
    riccati_residual: float
    iterations: int

    def energy(self, delta):
        return -np.log(self.E0) / delta

    def to_dict(self):
        return {
            "S_inf": self.S_inf.tolist(),
            "E0": self.E0,
            "P_inf": self.P_inf.tolist(),
            "riccati_residual": self.riccati_residual,
            "iterations": self.iterations,
        }


def _fixed_point(f, X, tol, max_iter, what):
    for it in range(1, max_iter + 1):
        Y = f(X)
        diff = float(np.max(np.abs(Y - X)))
        X = Y
        if diff < tol:
            return X, it
    raise ConvergenceError(f"{what} did not converge", diff, max_iter)


def ground_state(model, tol=1e-12, max_iter=100_000):
    """Leading eigen-triple: ``h = exp(-x'S_inf x/2)``, ``E0``, ``eta_inf = N(0, P_inf)``."""
    S_inf, it1 = _fixed_point(lambda X: riccati_map(X, model), model.S.copy(), tol, max_iter,
                              "Riccati iteration for S_inf")
    P_inf, it2 = _fixed_point(lambda X: phi_map(X, model), np.zeros_like(model.B), tol, max_iter,
                              "covariance iteration for P_inf")
    _, logdet = np.linalg.slogdet(np.eye(model.d) + model.B @ S_inf)
    residual = float(np.max(np.abs(riccati_map(S_inf, model) - S_inf)))
    return GroundStateTriple(S_inf, float(np.exp(-0.5 * logdet)), P_inf, residual, max(it1, it2))


@dataclass(frozen=True)
class ClosedForm1D:
    """``Q^n(1)(x) = lam[n] exp(-q[n] x^2/2)`` and ``Q^n(I)(x) = mu[n] x exp(-q[n] x^2/2)``."""

    q: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    def Qn_one(self, n, x):
        return self.lam[n] * np.exp(-0.5 * self.q[n] * np.asarray(x) ** 2)

    def Qn_identity(self, n, x):
        x = np.asarray(x)
        return self.mu[n] * x * np.exp(-0.5 * self.q[n] * x ** 2)


def _scalar_params(model):
    if model.d != 1:
        raise ConfigError("closed forms are one-dimensional", field="dimension")
    return float(model.A[0, 0]), float(model.B[0, 0]), float(model.S[0, 0])


def closed_form_1d(model, n):
    """Scalar recursions for powers of Q; index 0 is the identity operator."""
    A, B, S = _scalar_params(model)
    q = np.zeros(n + 1)
    lam = np.ones(n + 1)
    mu = np.ones(n + 1)
    for j in range(n):
        r = 1.0 + q[j] * B
        q[j + 1] = A * A * q[j] / r + S
        lam[j + 1] = lam[j] / np.sqrt(r)
        mu[j + 1] = A * mu[j] / r ** 1.5
    return ClosedForm1D(q, lam, mu)


def quadratic_push(model, F):
    """``P_{A,B}(exp(x'Fx/2)) = factor * exp(x'F_out x/2)``.

    Raises :class:`NonIntegrableError` unless ``I - BF`` is positive definite.
    """
    F = sym(np.atleast_2d(F))
    I = np.eye(model.d)
    w, V = np.linalg.eigh(model.B)
    Bh = (V * np.sqrt(w)) @ V.T
    if min_eig(I - Bh @ F @ Bh) <= 1e-10:
        raise NonIntegrableError("I - BF is not positive definite")
    _, logdet = np.linalg.slogdet(I - model.B @ F)
    F_out = sym(model.A.T @ solve_checked(I - F @ model.B, F) @ model.A)
    return float(np.exp(-0.5 * logdet)), F_out


@dataclass(frozen=True)
class PropagatorPowers:
    """k-step Gaussian transform: ``Q_{0,k}(1) propto exp(-x'S_k x/2)`` and ``N(A_k x, B_k)``.

    ``log_scale`` is ``log Q_{0,k}(1)(0)``.
    """

    k: int
    A_k: np.ndarray
    B_k: np.ndarray
    S_k: np.ndarray
    log_scale: float = 0.0


def propagator_powers(model, k):
    """Iterate ``e_map``/``phi_map`` from the zero covariance.

    ``model`` only needs ``A``, ``B``, ``S`` attributes, so a :class:`HatModel`
    with a singular ``S`` is accepted.
    """
    if k < 1:
        raise ConfigError("k must be >= 1", field="k")
    d = model.A.shape[0]
    I = np.eye(d)
    Omega = np.zeros((d, d))
    E = I.copy()
    S_k = np.zeros((d, d))
    log_scale = 0.0
    for _ in range(k):
        # (S^-1 + Omega)^-1 written without inverting a possibly singular S
        S_k = S_k + E.T @ model.S @ solve_checked(I + Omega @ model.S, E)
        log_scale -= 0.5 * np.linalg.slogdet(I + Omega @ model.S)[1]
        E = e_map(Omega, model) @ E
        Omega = phi_map(Omega, model)
    return PropagatorPowers(k, E, Omega, sym(S_k), float(log_scale))


@dataclass(frozen=True)
class HatModel:
    """Operators driving the updated flow: ``N(A_hat x, B_hat)`` and ``exp(-x'S_hat x/2)``.

    ``S`` is only guaranteed PSD; ``degenerate`` is set when it is singular.
    """

    A: np.ndarray
    B: np.ndarray
    S: np.ndarray
    degenerate: bool = field(default=False)

    @property
    def d(self):
        return self.A.shape[0]

    def as_model(self):
        if self.degenerate:
            raise ConfigError("hat potential is singular; no Lyapunov construction", field="S_hat")
        return GaussianModel(self.A, self.B, self.S)


def hat_model(model):
    I = np.eye(model.d)
    B_hat = sym(np.linalg.inv(np.linalg.inv(model.B) + model.S))
    A_hat = B_hat @ np.linalg.solve(model.B, model.A)
    # S - S(B^-1 + S)^-1 S = S (I + B S)^-1
    S_hat = sym(model.A.T @ model.S @ solve_checked(I + model.B @ model.S, model.A))
    return HatModel(A_hat, B_hat, S_hat, degenerate=not is_pd(S_hat))


def discretize_continuous(C, D, F, delta, scheme="exact"):
    """Time-``delta`` model of ``dx = Cx dt + sqrt(2D) dW`` killed at rate ``x'Fx/2``.

    ``exact`` uses the matrix exponential and the Van Loan block exponential
    for the noise covariance; ``euler`` is the first-order scheme.
    """
    if not delta > 0:
        raise ConfigError("must be positive", field="delta")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    d = C.shape[0]
    D = _as_matrix(D, d, "D")
    F = _as_matrix(F, d, "F")
    if scheme == "euler":
        A = np.eye(d) + C * delta
        B = 2.0 * D * delta
    elif scheme == "exact":
        M = np.zeros((2 * d, 2 * d))
        M[:d, :d] = -C
        M[:d, d:] = 2.0 * D
        M[d:, d:] = C.T
        E = expm(M * delta)
        A = E[d:, d:].T
        B = sym(A @ E[:d, d:])
    else:
        raise ConfigError(f"unknown scheme {scheme!r}", field="scheme")
    return GaussianModel(A, B, F * delta, delta)


def kl_divergence(mu1, mu2):
    """``KL(mu1 || mu2)`` between Gaussian measures with ``mu2`` non-degenerate.

    The covariance part is ``sum(x - log1p(x))/2`` over the eigenvalues ``x`` of
    ``Omega2^{-1/2} (Omega1 - Omega2) Omega2^{-1/2}``, which stays accurate and
    non-negative when the two measures are close.
    """
    if not is_pd(mu2.Omega):
        raise ConfigError("reference covariance must be positive definite", field="Omega")
    R = inv_sqrtm_pd(mu2.Omega)
    x = np.linalg.eigvalsh(sym(R @ (mu1.Omega - mu2.Omega) @ R))
    if x.min() <= -1.0:
        raise ConfigError("covariance must be positive definite", field="Omega")
    dm = R @ (mu1.m - mu2.m)
    return float(0.5 * (np.sum(x - np.log1p(x)) + dm @ dm))
