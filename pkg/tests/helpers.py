import numpy as np

from fkdmc.gaussian import GaussianModel
from fkdmc.linalg import sqrtm_psd


def random_spd(gen, d, lo=0.2, hi=3.0):
    Q, _ = np.linalg.qr(gen.standard_normal((d, d)))
    return (Q * gen.uniform(lo, hi, d)) @ Q.T


def random_model(gen, d, stable=True, rho_max=0.95):
    """Random model; with ``stable`` the contraction rate is drawn in (0.1, rho_max)."""
    B, S = random_spd(gen, d), random_spd(gen, d)
    A = gen.standard_normal((d, d))
    if stable:
        Sh = sqrtm_psd(S)
        Abar = Sh @ A @ np.linalg.inv(Sh)
        Abar *= gen.uniform(0.1, rho_max) / np.linalg.norm(Abar, 2)
        A = np.linalg.inv(Sh) @ Abar @ Sh
    return GaussianModel(A, B, S)
