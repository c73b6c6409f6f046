"""Stability certificates, TV stability, CLT variance and replicated experiments."""
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import solve_discrete_are
from scipy.integrate import simpson
from scipy.optimize import brentq
from scipy.stats import norm as _normal

from .engine import burn_in_steps, energy_estimate, gaussian_fk_model, run, run_replicates
from .errors import ConfigError, ExtinctionError, FKError, NumericalError
from .gaussian import (GaussianMeasure, closed_form_1d, exact_flow, ground_state,
                       kl_divergence, quadratic_push, riccati_map)
from .linalg import inv_sqrtm_pd, is_pd, min_eig, sqrtm_psd, sym
from .rng import derive_seed

STABILITY_TOL = 1e-10

# ---------------------------------------------------------------- stability


@dataclass(frozen=True)
class StabilityReport:
    holds: bool
    rho: float
    min_eig_gap: float
    alpha_bar: float = None
    H: np.ndarray = None
    certificate: tuple = None

    def to_dict(self):
        out = asdict(self)
        if self.H is not None:
            out["H"] = np.asarray(self.H).tolist()
        if self.certificate is not None:
            out["certificate"] = list(self.certificate)
        return out


def contraction_check(A, S, tol=STABILITY_TOL):
    """Test ``A'SA < S`` twice: by the eigen-gap and by ``|S^1/2 A S^-1/2|_2 < 1``.

    The two tests are equivalent; they are computed independently and a
    disagreement outside the tolerance band raises :class:`NumericalError`.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape != A.shape or not is_pd(S):
        raise ConfigError("S must be symmetric positive definite", field="S")
    Abar = sqrtm_psd(S) @ A @ inv_sqrtm_pd(S)
    rho = float(np.linalg.norm(Abar, 2))
    gap = min_eig(sym(S - A.T @ S @ A))
    by_norm = rho < 1.0 - tol
    by_gap = gap > tol * max(1.0, np.linalg.norm(S, 2))
    if by_norm != by_gap and abs(1.0 - rho) > 1e-6:
        raise NumericalError(f"stability tests disagree: rho={rho}, gap={gap}")
    return StabilityReport(bool(by_norm and by_gap), rho, gap)


def _lyapunov_eigs(model, alpha):
    """Minimal eigenvalues of ``B^-1 - alpha S`` and ``S - A'(I - alpha SB)^-1 SA``."""
    first = min_eig(sym(np.linalg.inv(model.B) - alpha * model.S))
    if first <= 0:
        return first, -np.inf
    # (I - alpha SB)^-1 S = (S^-1 - alpha B)^-1 is symmetric when the first holds
    M = np.linalg.inv(sym(np.linalg.inv(model.S) - alpha * model.B))
    return first, min_eig(sym(model.S - model.A.T @ M @ model.A))


def lyapunov_alpha(model, tol=1e-10):
    """Largest ``alpha`` for which ``exp(alpha x'Sx/2)`` is a Lyapunov function.

    Both feasibility conditions are monotone in ``alpha``, so the feasible set
    is an interval starting at 0 and bisection finds its end. The search range
    is ``(0, 1/lambda_max(BS))``, the exact range of the first condition.
    Returns ``(alpha_bar, certificate)`` with the two minimal eigenvalues
    evaluated at ``alpha_bar / 2``.
    """
    if not contraction_check(model.A, model.S).holds:
        raise ConfigError("no Lyapunov exponent without contraction A'SA < S", field="A")
    hi = 1.0 / float(np.max(np.linalg.eigvals(model.B @ model.S).real))
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if min(_lyapunov_eigs(model, mid)) > 0:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:  # pragma: no cover - excluded by the contraction test
        raise NumericalError("no feasible Lyapunov exponent found")
    return lo, _lyapunov_eigs(model, 0.5 * lo)


def riccati_h(model):
    """Solve ``H = A'(HB + I)^-1 HA + S`` as a discrete algebraic Riccati equation.

    With ``B = LL'`` the map is ``A'HA - A'HL(I + L'HL)^-1 L'HA + S``, the
    standard DARE form; scipy's Schur solver gives an independent route to the
    fixed point iterated in :func:`fkdmc.gaussian.ground_state`.
    """
    L = sqrtm_psd(model.B)
    H = sym(solve_discrete_are(model.A, L, model.S, np.eye(model.d)))
    residual = float(np.max(np.abs(riccati_map(H, model) - H)))
    return H, residual


def stability_report(model, tol=STABILITY_TOL):
    rep = contraction_check(model.A, model.S, tol)
    alpha = cert = None
    if rep.holds:
        alpha, cert = lyapunov_alpha(model)
    H, _ = riccati_h(model)
    return StabilityReport(rep.holds, rep.rho, rep.min_eig_gap, alpha, H, cert)


def chi_constant(model):
    """``sup_x P(G)(x) = det(I + BS)^-1/2``, reached at the origin."""
    factor, _ = quadratic_push(model, -model.S)
    return factor


# ---------------------------------------------------------------- TV stability


def tv_quadrature_1d(mu1, mu2, M=20001, width=12.0):
    """``sup_A |mu1(A) - mu2(A)| = (1/2) int |p1 - p2|`` for 1-d Gaussians.

    The log density ratio is expanded around ``mu2`` in terms of the mean and
    variance differences, so nearly equal measures keep relative accuracy.
    """
    m1, v1 = float(mu1.m[0]), float(mu1.Omega[0, 0])
    m2, v2 = float(mu2.m[0]), float(mu2.Omega[0, 0])
    if v1 <= 0 or v2 <= 0:
        raise ConfigError("degenerate covariance", field="Omega")
    dm, dv = m1 - m2, v1 - v2
    s = np.sqrt(max(v1, v2))

    def log_ratio(u):
        return u * u * dv / (2 * v1 * v2) + u * dm / v1 - dm * dm / (2 * v1) \
            - 0.5 * np.log1p(dv / v2)

    lo, hi = min(m1, m2) - width * s, max(m1, m2) + width * s
    # resolve the narrower density as well as the wider one
    M = max(M, int(np.ceil((hi - lo) / (0.01 * np.sqrt(min(v1, v2))))) + 1)
    x = np.linspace(lo, hi, M)
    # |p1 - p2| has kinks where the densities cross; integrate between them
    r = log_ratio(x - m2)
    cross = np.flatnonzero(np.sign(r[:-1]) * np.sign(r[1:]) < 0)
    roots = [brentq(lambda t: log_ratio(t - m2), x[i], x[i + 1], xtol=1e-15) for i in cross]
    edges = np.concatenate([[lo], roots, [hi]])
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        k = max(65, int(M * (b - a) / (hi - lo)) | 1)
        u = np.linspace(a, b, k) - m2
        lr = log_ratio(u)
        log_p2 = -0.5 * u * u / v2 - 0.5 * np.log(2 * np.pi * v2)
        # |p1 - p2| = max(p1, p2) * (1 - exp(-|log p1 - log p2|))
        diff = np.exp(log_p2 + np.maximum(lr, 0.0)) * -np.expm1(-np.abs(lr))
        total += simpson(diff, x=u)
    return 0.5 * float(total)


def tv_closed_form_1d(mu1, mu2):
    """Same quantity from the crossing points of the two densities."""
    m1, v1 = float(mu1.m[0]), float(mu1.Omega[0, 0])
    m2, v2 = float(mu2.m[0]), float(mu2.Omega[0, 0])
    s1, s2 = np.sqrt(v1), np.sqrt(v2)
    # p1 > p2 where a x^2 + b x + c > 0
    a = 0.5 * (1 / v2 - 1 / v1)
    b = m1 / v1 - m2 / v2
    c = 0.5 * (m2 ** 2 / v2 - m1 ** 2 / v1) - np.log(s1 / s2)
    if abs(a) < 1e-14 * max(1 / v1, 1 / v2):
        if b == 0:
            return 0.0
        r = -c / b
        F = lambda m, s: _normal.sf(r, m, s) if b > 0 else _normal.cdf(r, m, s)
        return float(abs(F(m1, s1) - F(m2, s2)))
    disc = b * b - 4 * a * c
    if disc <= 0:
        return 0.0
    r1, r2 = sorted([(-b - np.sqrt(disc)) / (2 * a), (-b + np.sqrt(disc)) / (2 * a)])
    inner = lambda m, s: _normal.cdf(r2, m, s) - _normal.cdf(r1, m, s)
    return float(abs(inner(m1, s1) - inner(m2, s2)))


@dataclass
class TVStability:
    kl: np.ndarray
    pinsker: np.ndarray
    tv: np.ndarray = None
    rate: float = None

    def dominates(self, rtol=1e-9):
        if self.tv is None:
            return True
        return bool(np.all(self.pinsker >= self.tv * (1 - rtol)))


def geometric_rate(values):
    """``exp`` of the least-squares slope of ``log(values)`` over its positive entries."""
    values = np.asarray(values, dtype=float)
    n = np.flatnonzero(values > 0)
    if n.size < 2:
        return 0.0
    slope = np.polyfit(n, np.log(values[n]), 1)[0]
    return float(np.exp(slope))


def tv_stability_bound(model, nu1, nu2, n, quadrature=True):
    """KL, Pinsker bound ``sqrt(KL/2)`` and (d = 1) quadrature TV between two exact flows."""
    for nu in (nu1, nu2):
        if not is_pd(nu.Omega):
            raise ConfigError("initial covariances must be positive definite", field="Omega")
    f1, f2 = exact_flow(model, nu1, n), exact_flow(model, nu2, n)
    kl = np.array([kl_divergence(a, b) for a, b in zip(f1, f2)])
    pinsker = np.sqrt(kl / 2.0)
    tv = None
    if quadrature and model.d == 1:
        tv = np.array([tv_quadrature_1d(a, b) for a, b in zip(f1, f2)])
    return TVStability(kl, pinsker, tv, geometric_rate(pinsker))


# ---------------------------------------------------------------- CLT variance


def asymptotic_variance_terms(model, n, P_inf=None):
    """Summands of the stationary-start CLT variance, index ``j = n - p``.

    Term ``j`` is ``s2 (mu_j/lam_j)^2 (q_j s2 + 1) / (2 q_j s2 + 1)^{3/2}`` with
    ``s2 = P_inf``, from the closed forms of ``Q^j(1)`` and ``Q^j(I)``.
    """
    s2 = float(ground_state(model).P_inf[0, 0]) if P_inf is None else float(P_inf)
    cf = closed_form_1d(model, n)
    q = cf.q
    return s2 * (cf.mu / cf.lam) ** 2 * (q * s2 + 1.0) / (2.0 * q * s2 + 1.0) ** 1.5


def asymptotic_variance_1d(model, n):
    """``sigma_n^2`` for the mean estimator started at ``eta_inf``."""
    return float(np.sum(asymptotic_variance_terms(model, n)))


@dataclass(frozen=True)
class CLTResult:
    n: int
    N: int
    reps: int
    scaled_variance: float
    sigma2: float
    errors: np.ndarray

    @property
    def relative_error(self):
        return abs(self.scaled_variance - self.sigma2) / self.sigma2

    def to_dict(self):
        return {"n": self.n, "N": self.N, "reps": self.reps,
                "scaled_variance": self.scaled_variance, "sigma2": self.sigma2,
                "relative_error": self.relative_error}


def clt_empirical(model, n, N, reps, seed, threads=1):
    """``N Var(eta_n^N(I) - eta_n(I))`` over ``reps`` runs from ``eta_inf``."""
    if model.d != 1:
        raise ConfigError("CLT comparison is one-dimensional", field="dimension")
    if reps < 2:
        raise ConfigError("variance needs at least two replicates", field="reps")
    P_inf = ground_state(model).P_inf
    eta0 = GaussianMeasure(np.zeros(1), P_inf)
    fk = gaussian_fk_model(model, eta0)
    runs = run_replicates(fk, N, n, seed, reps, "proportional", threads=threads)
    # eta_inf is invariant, so eta_n(I) = 0
    err = np.array([s.means[n][0] for s in runs])
    return CLTResult(n, N, reps, float(N * err.var(ddof=1)), asymptotic_variance_1d(model, n), err)


# ---------------------------------------------------------------- divergence


@dataclass
class GrowthReport:
    steps: np.ndarray
    mean_abs_error: np.ndarray
    slope: float
    ci: tuple
    growth: bool
    extinctions: int
    reps: int

    def ratio(self, n_hi, n_lo):
        return float(self.mean_abs_error[n_hi] / self.mean_abs_error[n_lo])

    def to_dict(self):
        return {"slope": self.slope, "ci": list(self.ci), "growth": self.growth,
                "extinctions": self.extinctions, "reps": self.reps,
                "mean_abs_error": self.mean_abs_error.tolist()}


def tail_slope(errors, lo, hi):
    """Least-squares slope of ``log mean|err|`` over steps ``lo..hi``; rows are reps."""
    n = np.arange(lo, hi + 1)
    return float(np.polyfit(n, np.log(errors[:, lo:hi + 1].mean(axis=0)), 1)[0])


def divergence_experiment(model, N, n_max, reps, seed, eta0=None, threads=1, boot=1000,
                          level=0.95):
    """Replicated ``E|eta_n^N(I) - eta_n(I)|`` and its fitted exponential rate.

    The rate is the least-squares slope of the log mean error over
    ``[n_max/2, n_max]``; ``growth`` is set when the bootstrap (over reps)
    confidence interval lies above 0. Runs lost to extinction are counted and
    excluded.
    """
    if model.d != 1:
        raise ConfigError("divergence experiment is one-dimensional", field="dimension")
    if eta0 is None:
        eta0 = GaussianMeasure.scalar(25.0, 1.0)
    exact = np.array([eta.m[0] for eta in exact_flow(model, eta0, n_max)])
    fk = gaussian_fk_model(model, eta0)
    rows, lost = [], 0
    seeds = [derive_seed(seed, r) for r in range(reps)]
    for s in seeds:
        try:
            series = run(fk, N, n_max, s, threads=threads)
        except FKError:
            lost += 1
            continue
        rows.append(np.abs(series.mean_array()[:, 0] - exact))
    if len(rows) < 2:
        raise ExtinctionError(n_max, f"{lost} of {reps} runs went extinct")
    errors = np.array(rows)
    lo = n_max // 2
    slope = tail_slope(errors, lo, n_max)
    gen = np.random.default_rng(derive_seed(seed, 2 ** 31))
    bs = [tail_slope(errors[gen.integers(0, len(rows), len(rows))], lo, n_max)
          for _ in range(boot)]
    ci = tuple(float(v) for v in np.quantile(bs, [(1 - level) / 2, (1 + level) / 2]))
    return GrowthReport(np.arange(n_max + 1), errors.mean(axis=0), slope, ci, ci[0] > 0,
                        lost, reps)


# ---------------------------------------------------------------- convergence in N


@dataclass
class SweepReport:
    N_list: list
    l2_error: np.ndarray
    energy: list

    @property
    def sup_error(self):
        return self.l2_error.max(axis=1)

    def slope_of(self, errors):
        return float(np.polyfit(np.log(self.N_list), np.log(errors), 1)[0])

    @property
    def slope(self):
        return self.slope_of(self.sup_error)

    def to_dict(self):
        return {"N": list(self.N_list), "sup_error": self.sup_error.tolist(),
                "slope": self.slope, "energy": self.energy}


def error_vs_N(model, eta0, N_list, reps, n_steps, seed, threads=1, burn_in=(10.0, 2.0)):
    """Replicated L2 error of the mean estimator at every step, per N.

    ``energy`` holds, per N, the mean over reps of the post burn-in average of
    ``eta_n^N(G)`` and its standard error across reps; both are ``None`` when
    the burn-in is longer than the run or there is a single rep.
    """
    fk = gaussian_fk_model(model, eta0)
    exact = np.array([eta.m for eta in exact_flow(model, eta0, n_steps)])
    l2, energy = [], []
    for i, N in enumerate(N_list):
        runs = run_replicates(fk, N, n_steps, derive_seed(seed, i), reps, threads=threads)
        sq = np.array([np.sum((s.mean_array() - exact) ** 2, axis=1) for s in runs])
        l2.append(np.sqrt(sq.mean(axis=0)))
        n0 = burn_in if isinstance(burn_in, int) else burn_in_steps(N, *burn_in)
        if n0 > n_steps or reps < 2:
            energy.append({"N": int(N), "value": None, "stderr": None})
            continue
        e = np.array([energy_estimate(s, burn_in=n0).value for s in runs])
        energy.append({"N": int(N), "value": float(e.mean()),
                       "stderr": float(e.std(ddof=1) / np.sqrt(len(e)))})
    return SweepReport(list(N_list), np.array(l2), energy)
