"""Numerical laboratory for two-dimensional Coulomb gases and weighted Fekete sets."""

from .analysis import (DiscrepancyField, discrepancy, discrepancy_field, discrepancy_moment,
                       electric_field, field_Lq_norm, potential_H, psi6)
from .energy import (Configuration, EnergyReport, FeketeOptions, FeketeResult, energy_functional_I,
                     grad_hamiltonian, hamiltonian, minimize_fekete, splitting_report)
from .errors import (CoulombLabError, ConvergenceError, DomainError, DomainTooSmallError, NoSupportError,
                     NumericalError, PotentialError, SingularConfigurationError, StagnationError)
from .obstacle import obstacle_solve_grid
from .periodic import (Torus, green_regularized_constant, lattice_scan, torus_green, w_periodic,
                       w_scaled)
from .potential import (EquilibriumMeasure, Potential, evaluate_potential, log_potential_U,
                        solve_equilibrium_radial, zeta)
from .sampler import ChainStats, McmcParams, chain_diagnostics, ginibre_exact, mcmc_chain
from .zfunc import (PartitionReport, alpha_conjectural, logZ_ginibre_asymptotic, logZ_ginibre_exact)

__version__ = "0.1.0"

__all__ = [
    "ChainStats", "Configuration", "ConvergenceError", "CoulombLabError", "DiscrepancyField",
    "DomainError", "DomainTooSmallError", "EnergyReport", "EquilibriumMeasure", "FeketeOptions",
    "FeketeResult", "McmcParams", "NoSupportError", "NumericalError", "PartitionReport", "Potential",
    "PotentialError", "SingularConfigurationError", "StagnationError", "Torus", "alpha_conjectural",
    "chain_diagnostics", "discrepancy", "discrepancy_field", "discrepancy_moment", "electric_field",
    "energy_functional_I", "evaluate_potential", "field_Lq_norm", "ginibre_exact",
    "grad_hamiltonian", "green_regularized_constant", "hamiltonian", "lattice_scan",
    "log_potential_U", "logZ_ginibre_asymptotic", "logZ_ginibre_exact", "mcmc_chain",
    "minimize_fekete", "obstacle_solve_grid", "potential_H", "psi6", "solve_equilibrium_radial",
    "splitting_report", "torus_green", "w_periodic", "w_scaled", "zeta",
]
