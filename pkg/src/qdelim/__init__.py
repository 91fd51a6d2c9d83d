"""Induced decoherence from driven dissipative environments via adiabatic elimination."""
from .errors import *  # noqa: F401,F403
from .floquet import FloquetReduction, PeriodicPerturbation, cp_structure_check, extract_rates, floquet_reduce, floquet_reduce_bipartite
from .lindblad import DissipationChannel, LindbladModel, PeriodicHamiltonian, integrate, monodromy
from .linalg import spectral_split, shifted_solve, decompose_generator
from .stationary import CouplingSet, EnvModel, XMatrix, degenerate_reduce, env_steady_state, second_order_eliminate
from .tls import QddStrongParams, QddUltraParams, TargetOps, ThermalParams, ksz_closed_form, strong_rates_exact, thm3_classify

__version__ = "0.1.0"
