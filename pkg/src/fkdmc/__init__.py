"""Fixed-population diffusion Monte Carlo with exact linear-Gaussian oracles."""
__version__ = "0.1.0"

from .engine import FKModel, energy_estimate, gaussian_fk_model, run, run_replicates
from .errors import (ConfigError, ConvergenceError, ExtinctionError, FKError, NonIntegrableError,
                     NumericalError, PropagationError, StableKNotFound)
from .gaussian import (GaussianMeasure, GaussianModel, closed_form_1d, discretize_continuous,
                       exact_flow, ground_state, hat_model, propagator_powers)
from .rng import BACKEND, CounterRNG

__all__ = [
    "BACKEND", "ConfigError", "ConvergenceError", "CounterRNG", "ExtinctionError", "FKError",
    "FKModel", "GaussianMeasure", "GaussianModel", "NonIntegrableError", "NumericalError",
    "PropagationError", "StableKNotFound", "closed_form_1d", "discretize_continuous",
    "energy_estimate", "exact_flow", "gaussian_fk_model", "ground_state", "hat_model",
    "propagator_powers", "run", "run_replicates",
]
