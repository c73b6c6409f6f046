"""Small dense linear-algebra helpers on symmetric matrices."""
import numpy as np

from .errors import NumericalError

PD_TOL = 1e-10
COND_LIMIT = 1e12


def sym(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def min_eig(M):
    return float(np.linalg.eigvalsh(sym(M))[0])


def is_pd(M, tol=PD_TOL):
    """Symmetric positive-definiteness: smallest eigenvalue above ``tol``."""
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
        return False
    return min_eig(M) > tol


def is_psd(M, tol=PD_TOL):
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
        return False
    return min_eig(M) >= -tol


def sqrtm_psd(M):
    w, V = np.linalg.eigh(sym(M))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def inv_sqrtm_pd(M):
    w, V = np.linalg.eigh(sym(M))
    return (V / np.sqrt(w)) @ V.T


def factor_psd(M):
    """Return L with L @ L.T == M, valid for singular PSD matrices."""
    w, V = np.linalg.eigh(sym(M))
    return V * np.sqrt(np.clip(w, 0.0, None))


def solve_checked(M, R):
    """Solve ``M X = R`` and fail loudly when ``M`` is close to singular."""
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NumericalError(f"matrix condition number {cond:.3e} exceeds {COND_LIMIT:.0e}")
    return np.linalg.solve(M, R)
