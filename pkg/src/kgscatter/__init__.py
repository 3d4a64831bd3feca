"""Numerical experiments for Klein-Gordon equations with a Hartree nonlinearity.

Modules: ``params`` (exact admissibility arithmetic), ``spectral`` (periodic
grids and multipliers), ``potential`` (the ``|x|^{-gamma}`` kernel),
``dynamics`` (half-waves, Strang, Picard), ``scattering`` (final states and
diagnostics), ``cli`` (command-line front end).
"""

from .params import Params, check_constraints, derive_exponents, feasible_gamma_interval, theoretical_decay
from .spectral import SpectralGrid, free_propagate, hnorm, sobolev_norm
from .potential import PotentialSpec, build_kernel, hartree_force
from .dynamics import evolve, energy, picard_iterate, to_halfwaves, from_halfwaves
from .scattering import extract_final_state, fit_decay_exponent, solve_final_state_problem, xnorm_diagnostics

__version__ = "0.1.0"

__all__ = [
    "Params",
    "check_constraints",
    "derive_exponents",
    "feasible_gamma_interval",
    "theoretical_decay",
    "SpectralGrid",
    "free_propagate",
    "hnorm",
    "sobolev_norm",
    "PotentialSpec",
    "build_kernel",
    "hartree_force",
    "evolve",
    "energy",
    "picard_iterate",
    "to_halfwaves",
    "from_halfwaves",
    "extract_final_state",
    "fit_decay_exponent",
    "solve_final_state_problem",
    "xnorm_diagnostics",
]
